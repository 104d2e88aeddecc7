#pragma once

#include "ticbench/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ticbench {

struct PartitionConfig {
  int n_clusters = 100;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  std::uint64_t seed = 0;
  int min_points_per_cluster_guard = 5;

  /// min(K, max(1, floor(n / guard))).
  int effective_clusters(std::size_t n) const;
};

struct Pca2Result {
  Matrix scores;               // n x 2
  Eigen::Vector2d variances;   // sample variance along each component
  Matrix components;           // F x 2, unit columns
  bool degenerate = false;     // all rows equal; scores are zero
};

/// Projection onto the two leading eigenvectors of the sample covariance.
/// Each eigenvector is signed so its largest-magnitude entry is positive.
Pca2Result pca2(const Matrix& x);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below tol. Empty clusters are moved to the farthest point.
KMeansResult kmeans(const Matrix& points, int k, int max_iters, double tol, std::uint64_t seed);

/// standardize -> pca2 -> k-means with the effective cluster count.
std::vector<int> partition_equivalence_classes(const Matrix& x, const PartitionConfig& cfg);

/// Unweighted mean of the within-cluster population variance of y over non-empty clusters.
double total_variance_of_partition(const std::vector<int>& labels, const std::vector<double>& y);

double total_variance(const Matrix& x_sel, const std::vector<double>& y, const PartitionConfig& cfg);

struct SelectionResult {
  std::vector<std::string> selected_feature_ids;
  std::vector<std::size_t> selected_indices;
  std::vector<double> totalvariance_trace;
  double epsilon = 0.001;
  std::string catalog_version;
};

/// Forward selection: each round adds the feature with the lowest TotalVariance of the
/// augmented set (ties to the lowest index) while the gain is at least epsilon.
SelectionResult greedy_select(const Matrix& x_all, const std::vector<std::string>& feature_ids,
                              const std::vector<double>& y, double epsilon,
                              const PartitionConfig& cfg,
                              std::optional<std::size_t> max_features = std::nullopt,
                              std::size_t jobs = 1);

/// Ratio of kNN joint entropies of the standardized subset and full set; 0 for an empty subset.
double information_content(const Matrix& x_subset, const Matrix& x_full, int k = 3,
                           std::uint64_t seed = 0);

std::string selection_to_json(const SelectionResult& r, const std::string& config_hash = {});
SelectionResult parse_selection_json(std::string_view text, const std::string& origin);

}  // namespace ticbench
