#pragma once

#include "ticbench/metrics.hpp"
#include "ticbench/tables.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ticbench {

enum class Backend { reference_kernel, remote };

std::string to_string(Backend b);
Backend parse_backend(std::string_view s);

enum class Aggregation { mean, median };

struct PredictorConfig {
  Backend backend = Backend::reference_kernel;
  double bandwidth_multiplier = 1.0;
  std::size_t knn_fallback_k = 32;
  std::optional<std::string> endpoint_url;
  int timeout_ms = 30000;
  std::size_t max_in_flight = 4;
  std::uint64_t seed = 0;  // bandwidth pair sampling

  /// Throws RangeError when the fields are inconsistent.
  void validate() const;
};

/// Median Euclidean distance over all context pairs, or over 2000 seeded pairs
/// when there are more. Falls back to 1 when every sampled distance is zero.
double median_pairwise_distance(const Matrix& z, std::uint64_t seed, std::size_t max_pairs = 2000);

/// Nadaraya-Watson estimate with a Gaussian kernel on context-standardized inputs.
std::vector<double> reference_predict(const ContextTable& ctx, const TargetTable& tgt,
                                      const PredictorConfig& cfg);

/// Request body of the wire protocol; raw (unstandardized) inputs.
std::string build_predict_request(const ContextTable& ctx, const TargetTable& tgt);
/// Validates a response body against |tgt| rows.
std::vector<double> parse_predict_response(std::string_view body, std::size_t expected_rows);

std::vector<double> remote_predict(const ContextTable& ctx, const TargetTable& tgt,
                                   const std::string& endpoint, int timeout_ms,
                                   std::size_t max_in_flight = 4);

/// GET /health; returns the advertised backend name.
std::string remote_health(const std::string& endpoint, int timeout_ms);

std::vector<double> predict_in_context(const ContextTable& ctx, const TargetTable& tgt,
                                       const PredictorConfig& cfg);

ScoreRecord transferability_score(const std::vector<double>& predictions, const std::string& model_id,
                                  const std::string& dataset_id, TaskName task,
                                  Aggregation aggregation = Aggregation::mean,
                                  const std::string& method = "timetic");

}  // namespace ticbench
