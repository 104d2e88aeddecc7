#pragma once

#include "ticbench/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ticbench {

struct Series {
  std::string series_id;
  std::vector<double> values;
  std::vector<std::string> timestamps;  // empty when the source has no timestamp column
};

struct SeriesDataset {
  std::string dataset_id;
  std::vector<Series> series;
  std::string frequency_label;

  std::size_t total_points() const;
};

enum class TaskName { short_term, medium_term, long_term };

std::string to_string(TaskName t);
TaskName parse_task_name(std::string_view s);

struct TaskSpec {
  TaskName name = TaskName::short_term;
  std::size_t context_len = 256;
  std::size_t horizon = 64;

  /// short 256/64, medium 1024/256, long 2048/512.
  static TaskSpec preset(TaskName name);
  std::size_t span() const { return context_len + horizon; }
};

enum class SamplingRegime { standard, fewshot };

std::string to_string(SamplingRegime r);
SamplingRegime parse_regime(std::string_view s);

/// Windows drawn in the few-shot regime.
inline constexpr std::size_t kFewShotWindows = 100;

struct Window {
  std::string window_id;
  std::string series_id;
  std::size_t start = 0;
  std::vector<double> context;
  std::vector<double> horizon_actuals;
};

/// `dataset/series/start/task`; parsing from the right keeps it collision-free.
std::string make_window_id(const std::string& dataset_id, const std::string& series_id,
                           std::size_t start, TaskName task);

/// Reads a `series_id[,timestamp],value` CSV. The dataset id defaults to the file stem.
SeriesDataset load_dataset(const std::filesystem::path& path,
                           std::optional<std::string> dataset_id = std::nullopt);
SeriesDataset parse_dataset(std::string_view csv_text, const std::string& dataset_id);
std::string dataset_to_csv(const SeriesDataset& ds);

/// Standard regime: up to n windows per dataset, spread by uniform stride over each
/// eligible series and interleaved round-robin. Few-shot: a seeded subsample of
/// exactly min(100, available) windows of the standard candidate set, in candidate order.
std::vector<Window> sample_windows(const SeriesDataset& ds, const TaskSpec& task, std::size_t n,
                                   SamplingRegime regime, std::uint64_t seed);

/// Seeded choice of min(count, candidates) indices without replacement, ascending.
std::vector<std::size_t> subsample_indices(std::size_t candidates, std::size_t count,
                                           std::uint64_t seed);

// ---- layer embeddings (TTEB) ----

struct LayerEmbeddings {
  std::string model_id;
  std::string scope_id;
  std::vector<Matrix> layers;  // layer i is T_i x d_i
};

/// Little-endian: "TTEB", u32 version=1, u32 n_layers, per layer u32 T, u32 d, T*d f32 row-major.
LayerEmbeddings load_embeddings(const std::filesystem::path& path, std::string model_id = {},
                                std::string scope_id = {});
LayerEmbeddings parse_embeddings(std::string_view bytes, std::string model_id,
                                 std::string scope_id);
std::string embeddings_to_bytes(const LayerEmbeddings& emb);
void write_embeddings(const std::filesystem::path& path, const LayerEmbeddings& emb);

// ---- performance records ----

struct PerformanceRecord {
  std::string model_id;
  std::string dataset_id;
  TaskName task = TaskName::short_term;
  std::string window_id;
  double zero_shot_mase = 0.0;
  std::optional<double> finetuned_mase;
};

std::vector<PerformanceRecord> load_performance(const std::filesystem::path& path);
std::vector<PerformanceRecord> parse_performance(std::string_view csv_text,
                                                 const std::string& origin);
std::string performance_to_csv(const std::vector<PerformanceRecord>& records);

}  // namespace ticbench
