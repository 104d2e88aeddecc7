#pragma once

#include "ticbench/ingest.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ticbench {

/// Mean absolute error of the forecast divided by the mean in-sample
/// seasonal-naive error at lag m.
double mase(const std::vector<double>& forecast, const std::vector<double>& actual,
            const std::vector<double>& insample, std::size_t m = 1);

/// Zero-based average ranks; rank 0 is the largest value when `descending`.
std::vector<double> average_ranks(const std::vector<double>& v, bool descending = false);

/// Pearson correlation of average ranks. Empty when either input has zero rank variance.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

enum class KendallWeights { hyperbolic, uniform };

/// Pairs weighted by 1/(r_i+1) + 1/(r_j+1) on ground-truth goodness ranks
/// (rank 0 = best). Pairs tied in either input are dropped. Empty when no pair remains.
std::optional<double> weighted_kendall(const std::vector<double>& scores, const std::vector<double>& truth,
                                       KendallWeights weights = KendallWeights::hyperbolic);

/// One transferability score per (method, model, dataset, task); higher is better.
struct ScoreRecord {
  std::string method;
  std::string model_id;
  std::string dataset_id;
  TaskName task = TaskName::short_term;
  double score = 0.0;
  double raw_mean_prediction = 0.0;
  std::size_t n_target_rows = 0;
};

std::string scores_to_csv(const std::vector<ScoreRecord>& scores, const std::string& config_hash = {});
std::vector<ScoreRecord> parse_scores(std::string_view csv_text, const std::string& origin);
std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);

struct RankingCell {
  std::string method;
  std::string regime;
  std::string dataset_id;
  TaskName task = TaskName::short_term;
  std::size_t n_models = 0;
  std::optional<double> tau_w;
  std::optional<double> spearman;
  bool skipped = false;
  std::string note;
};

struct RankingMean {
  double tau_w = 0.0;
  double spearman = 0.0;
  std::size_t n_cells = 0;
};

struct RankingReport {
  std::vector<RankingCell> cells;

  /// Unweighted mean over non-skipped cells with defined correlations.
  std::optional<RankingMean> mean(const std::string& method, const std::string& regime,
                                  std::optional<TaskName> task = std::nullopt) const;
};

/// Ground-truth goodness per cell is −mean(finetuned MASE) over the supplied records.
/// Cells with fewer than two models are kept but marked skipped.
std::vector<RankingCell> evaluate_ranking(const std::vector<ScoreRecord>& scores,
                                          const std::vector<PerformanceRecord>& truth,
                                          const std::string& regime = "standard",
                                          KendallWeights weights = KendallWeights::hyperbolic);

std::string report_to_json(const RankingReport& report, const std::string& config_hash = {});
RankingReport parse_report_json(std::string_view text, const std::string& origin);

}  // namespace ticbench
