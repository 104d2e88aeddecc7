#pragma once

#include "ticbench/common.hpp"
#include "ticbench/metrics.hpp"
#include "ticbench/tables.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ticbench {

/// Final-layer tokens aligned to horizon steps, with the horizon values as labels.
struct EmbeddingLabelPair {
  std::string window_id;
  Matrix features;             // T x d
  std::vector<double> labels;  // length T
};

/// "TTEH" binary container for EmbeddingLabelPair lists (little-endian):
/// magic, u32 version=1, u32 n_windows, then per window u32 id_len, id bytes,
/// u32 T, u32 d, T*d f32 features row-major, T f32 labels.
std::string pairs_to_bytes(const std::vector<EmbeddingLabelPair>& pairs);
std::vector<EmbeddingLabelPair> parse_pairs(std::string_view bytes, const std::string& origin);
std::vector<EmbeddingLabelPair> load_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<EmbeddingLabelPair>& pairs);

inline constexpr double kLogmeCap = 1e10;

/// Log marginal evidence per sample of Bayesian linear regression of y on F,
/// with y centered. Used by logme and its tests.
double logme_evidence(const Vector& singular_values, std::size_t d, const Vector& z, double y_sq_norm,
                      std::size_t n, double alpha, double beta);

/// Evidence-maximizing fixed point of (alpha, beta); returns evidence / n.
double logme(const Matrix& f, const std::vector<double>& y);

/// Centered kernel alignment between F F^T and y y^T; 0 for degenerate kernels.
double lfc(const Matrix& f, const std::vector<double>& y);

/// Negative training MSE of ridge regression with intercept.
double regscore(const Matrix& f, const std::vector<double>& y);

struct MetaLearnerModel {
  Vector weights;  // original input scale
  double intercept = 0.0;
  double ridge_lambda = 1e-3;
  std::size_t training_row_count = 0;
};

/// Closed-form ridge on standardized inputs and labels; throws SingularSystemError
/// if lambda = 0 and the system is rank-deficient.
MetaLearnerModel meta_fit(const ContextTable& ctx, double ridge_lambda = 1e-3);
std::vector<double> meta_predict(const MetaLearnerModel& model, const TargetTable& tgt);

/// score = -mean(zero-shot MASE) over records of one (model, dataset, task).
ScoreRecord zero_shot_score(const std::vector<PerformanceRecord>& records);

enum class WindowMethod { logme, lfc, regscore };
std::string to_string(WindowMethod m);

/// Mean of the per-window method value; already higher-is-better.
ScoreRecord window_baseline_score(WindowMethod method, const std::vector<EmbeddingLabelPair>& pairs,
                                  const std::string& model_id, const std::string& dataset_id, TaskName task);

}  // namespace ticbench
