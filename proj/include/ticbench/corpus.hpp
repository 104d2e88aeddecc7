#pragma once

#include "ticbench/baselines.hpp"
#include "ticbench/ingest.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace ticbench {

struct CellKey {
  std::string model_id;
  std::string dataset_id;
  TaskName task = TaskName::short_term;

  auto operator<=>(const CellKey&) const = default;
};

/// Everything a benchmark consumes. On disk:
///   manifest.json
///   datasets/<dataset>.csv
///   embeddings/<model>/<dataset>__<task>.tteb
///   horizon/<model>/<dataset>__<task>.tteh
///   performance.csv
struct Corpus {
  std::vector<std::string> model_ids;
  std::vector<SeriesDataset> datasets;
  std::vector<TaskName> tasks;
  std::size_t windows_per_dataset = 300;
  std::map<CellKey, LayerEmbeddings> embeddings;
  std::map<CellKey, std::vector<EmbeddingLabelPair>> horizon;
  std::vector<PerformanceRecord> records;
  std::string generator;  // free-form provenance JSON

  const SeriesDataset& dataset(const std::string& id) const;
};

std::filesystem::path embeddings_path(const std::filesystem::path& root, const CellKey& key);
std::filesystem::path horizon_path(const std::filesystem::path& root, const CellKey& key);

void write_corpus(const Corpus& corpus, const std::filesystem::path& root);
/// Throws FormatError when the manifest or any listed artifact is missing.
Corpus load_corpus(const std::filesystem::path& root);

}  // namespace ticbench
