#pragma once

#include "ticbench/baselines.hpp"
#include "ticbench/corpus.hpp"
#include "ticbench/entropy.hpp"
#include "ticbench/features.hpp"
#include "ticbench/icl.hpp"
#include "ticbench/metrics.hpp"
#include "ticbench/selection.hpp"
#include "ticbench/tables.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ticbench {

inline const std::vector<std::string> kAllMethods = {"timetic",  "timetic_remote", "logme", "lfc",
                                                     "regscore", "meta",           "zero_shot"};

struct RunConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  std::vector<TaskName> tasks = {TaskName::short_term, TaskName::medium_term, TaskName::long_term};
  std::vector<SamplingRegime> regimes = {SamplingRegime::standard, SamplingRegime::fewshot};
  ScenarioKind scenario = ScenarioKind::known_model_unseen_data;
  std::vector<std::string> methods = kAllMethods;
  std::uint64_t seed = 1;
  std::size_t windows_per_dataset = 0;  // 0: take the corpus manifest value

  double epsilon = 0.001;
  int k_clusters = 100;
  std::size_t max_features = 20;
  std::size_t selection_max_samples = 2000;

  int entropy_k = 3;
  std::size_t token_cap = kDefaultTokenCap;

  std::size_t max_context_rows = 0;  // 0: no truncation
  double bandwidth_multiplier = 1.0;
  std::size_t knn_fallback_k = 32;
  Aggregation aggregation = Aggregation::mean;
  std::optional<std::string> endpoint;  // remote backend
  int timeout_ms = 30000;
  std::size_t max_in_flight = 4;

  double meta_lambda = 1e-3;
  KendallWeights weights = KendallWeights::hyperbolic;

  std::size_t jobs = 1;  // not part of the hash

  /// Throws RangeError / FormatError on inconsistent settings.
  void validate() const;
  /// Canonical JSON (sorted keys). The output directory is not part of it.
  std::string to_json() const;
  std::string hash() const;
  static RunConfig from_json(std::string_view text, const std::string& origin);

  PartitionConfig partition() const;
  PredictorConfig predictor(Backend backend) const;
};

struct BlockKey {
  std::string dataset_id;
  TaskName task = TaskName::short_term;
  auto operator<=>(const BlockKey&) const = default;
};

/// Deterministic artifacts derived from a corpus before any estimation.
struct PreparedCorpus {
  std::map<BlockKey, std::vector<std::string>> standard_windows;
  std::map<BlockKey, std::set<std::string>> fewshot_windows;
  std::vector<FeatureMatrix> features;  // one per block, standard windows
  SelectionResult selection;
  std::vector<EntropyProfile> profiles;
  std::vector<CharacteristicRow> rows;
};

/// Samples windows per (dataset, task) and extracts features on the standard set.
std::vector<FeatureMatrix> stage_extract(const Corpus& corpus, const RunConfig& cfg, SamplingRegime regime,
                                         std::map<BlockKey, std::vector<std::string>>* window_ids = nullptr);

/// Pools (model, window) pairs with fine-tuned labels, keeps a seeded subsample of at
/// most selection_max_samples, and runs greedy selection.
SelectionResult stage_select(const std::vector<FeatureMatrix>& features,
                             const std::vector<PerformanceRecord>& records, const RunConfig& cfg);

std::vector<EntropyProfile> stage_profile(const std::map<CellKey, LayerEmbeddings>& embeddings, const RunConfig& cfg);

PreparedCorpus prepare(const Corpus& corpus, const RunConfig& cfg);

struct EstimateTarget {
  std::string model_id;
  std::string dataset_id;
  TaskName task = TaskName::short_term;
};

/// One TimeTic (context-table) score for a target cell.
ScoreRecord estimate_cell(const std::vector<CharacteristicRow>& rows, const EstimateTarget& target,
                          const RunConfig& cfg, Backend backend,
                          const std::optional<std::set<std::string>>& windows = std::nullopt,
                          const std::string& method = "timetic");

ScoreRecord meta_cell(const std::vector<CharacteristicRow>& rows, const EstimateTarget& target, const RunConfig& cfg,
                      const std::optional<std::set<std::string>>& windows = std::nullopt);

ScoreRecord zero_shot_cell(const std::vector<PerformanceRecord>& records, const EstimateTarget& target,
                           const std::optional<std::set<std::string>>& windows = std::nullopt);

ScoreRecord window_baseline_cell(WindowMethod method, const std::vector<EmbeddingLabelPair>& pairs,
                                 const EstimateTarget& target,
                                 const std::optional<std::set<std::string>>& windows = std::nullopt);

struct BenchmarkResult {
  std::map<std::string, std::vector<ScoreRecord>> scores;  // by regime
  RankingReport report;
  std::vector<std::string> notes;
  /// Order in which datasets served as the held-out target.
  std::vector<std::string> target_visits;
};

/// Leave-one-dataset-out: each dataset is the target once; every model is scored by
/// every requested method under each regime and task.
BenchmarkResult run_benchmark(const Corpus& corpus, const PreparedCorpus& prepared, const RunConfig& cfg);

/// Table-style listing of mean tau_w / Spearman per method, regime and task.
std::string format_report_table(const RankingReport& report, const std::vector<std::string>& methods);

/// Writes run_config.json, per-block features, selection, profiles, table,
/// per-regime scores, report.json and report.txt. Refuses (StaleInputError) to reuse an
/// output directory produced by a different configuration unless `force`.
void write_benchmark_outputs(const RunConfig& cfg, const PreparedCorpus& prepared, const BenchmarkResult& result,
                             bool force = false);

/// Provenance checks for stage inputs.
std::string config_hash_of(const std::filesystem::path& artifact);
std::string digest_of_files(const std::vector<std::filesystem::path>& paths);
/// Throws StaleInputError if any source is newer than `derived`.
void require_newer(const std::filesystem::path& derived, const std::vector<std::filesystem::path>& sources);

}  // namespace ticbench
