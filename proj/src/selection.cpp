#include "ticbench/selection.hpp"

#include "ticbench/entropy.hpp"
#include "ticbench/errors.hpp"
#include "ticbench/features.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace ticbench {

int PartitionConfig::effective_clusters(std::size_t n) const {
  if (n_clusters < 1 || min_points_per_cluster_guard < 1) {
    throw RangeError("n_clusters and min_points_per_cluster_guard must be positive");
  }
  auto by_guard = static_cast<long>(n / static_cast<std::size_t>(min_points_per_cluster_guard));
  return static_cast<int>(std::min<long>(n_clusters, std::max<long>(1, by_guard)));
}

Pca2Result pca2(const Matrix& x) {
  if (x.rows() < 2) throw InsufficientDataError("pca2 needs at least two rows");
  if (x.cols() < 1) throw RangeError("pca2 needs at least one column");
  const auto n = x.rows();
  const auto f = x.cols();
  Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);

  Pca2Result out;
  out.scores = Matrix::Zero(n, 2);
  out.components = Matrix::Zero(f, 2);
  out.variances.setZero();
  double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
  if (cov.trace() <= 1e-24 * scale * scale) {
    out.degenerate = true;
    return out;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const auto& values = eig.eigenvalues();   // ascending
  const auto& vectors = eig.eigenvectors();
  for (int c = 0; c < 2 && c < f; ++c) {
    Vector v = vectors.col(f - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    out.components.col(c) = v;
    out.variances(c) = std::max(0.0, values(f - 1 - c));
  }
  out.scores = centered * out.components;
  return out;
}

namespace {

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

void assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels,
            std::vector<double>& dist) {
  const auto n = points.rows();
  const auto k = centroids.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      double d = sq_dist(points, i, centroids, c);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    dist[i] = best;
  }
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, int max_iters, double tol, std::uint64_t seed) {
  const auto n = points.rows();
  if (n < 1) throw InsufficientDataError("kmeans needs at least one point");
  if (k < 1) throw RangeError("kmeans needs k >= 1");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  const auto d = points.cols();

  std::mt19937_64 rng(seed);
  Matrix centroids(k, d);
  {
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));
    std::vector<double> d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = sq_dist(points, i, centroids, 0);
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (double v : d2) total += v;
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double target = std::uniform_real_distribution<double>(0.0, total)(rng);
        double acc = 0.0;
        pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc > target && d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
      }
      centroids.row(c) = points.row(pick);
      for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points, i, centroids, c));
    }
  }

  KMeansResult res;
  res.labels.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  for (int it = 0; it < max_iters; ++it) {
    assign(points, centroids, res.labels, dist);
    Matrix sums = Matrix::Zero(k, d);
    std::vector<long> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.labels[i]) += points.row(i);
      ++counts[res.labels[i]];
    }
    Matrix next = centroids;
    std::vector<bool> taken(n, false);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      Eigen::Index far = -1;
      double far_d = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[i] && dist[i] > far_d) {
          far_d = dist[i];
          far = i;
        }
      }
      if (far >= 0) {
        taken[far] = true;
        dist[far] = 0.0;
        next.row(c) = points.row(far);
      }
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
    centroids = std::move(next);
    res.iterations = it + 1;
    if (shift < tol) break;
  }
  assign(points, centroids, res.labels, dist);
  res.centroids = std::move(centroids);
  return res;
}

std::vector<int> partition_equivalence_classes(const Matrix& x, const PartitionConfig& cfg) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 1) throw InsufficientDataError("partition needs at least one row");
  int k = cfg.effective_clusters(n);
  if (k == 1 || n < 2) return std::vector<int>(n, 0);
  auto z = standardize(x);
  auto proj = pca2(z.values);
  return kmeans(proj.scores, k, cfg.kmeans_max_iters, cfg.kmeans_tol, cfg.seed).labels;
}

double total_variance_of_partition(const std::vector<int>& labels, const std::vector<double>& y) {
  if (labels.size() != y.size()) throw RangeError("labels and y differ in length");
  if (y.size() < 2) throw InsufficientDataError("TotalVariance needs at least two samples");
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw RangeError("negative cluster label");
    k = std::max(k, l + 1);
  }
  std::vector<double> sum(k, 0.0), count(k, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum[labels[i]] += y[i];
    count[labels[i]] += 1.0;
  }
  std::vector<double> ss(k, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    double dv = y[i] - sum[labels[i]] / count[labels[i]];
    ss[labels[i]] += dv * dv;
  }
  double acc = 0.0;
  int non_empty = 0;
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0.0) continue;
    acc += ss[c] / count[c];
    ++non_empty;
  }
  return acc / non_empty;
}

double total_variance(const Matrix& x_sel, const std::vector<double>& y, const PartitionConfig& cfg) {
  if (y.size() < 2) throw InsufficientDataError("TotalVariance needs at least two samples");
  if (static_cast<std::size_t>(x_sel.rows()) != y.size()) {
    throw RangeError("feature rows and labels differ in length");
  }
  return total_variance_of_partition(partition_equivalence_classes(x_sel, cfg), y);
}

SelectionResult greedy_select(const Matrix& x_all, const std::vector<std::string>& feature_ids,
                              const std::vector<double>& y, double epsilon,
                              const PartitionConfig& cfg, std::optional<std::size_t> max_features,
                              std::size_t jobs) {
  const auto f = static_cast<std::size_t>(x_all.cols());
  if (f < 1) throw RangeError("greedy_select needs at least one feature");
  if (feature_ids.size() != f) throw RangeError("feature id count does not match columns");
  if (x_all.rows() < 2 || y.size() < 2) throw InsufficientDataError("greedy_select needs n >= 2");

  SelectionResult res;
  res.epsilon = epsilon;
  std::vector<bool> used(f, false);
  double current = std::numeric_limits<double>::infinity();
  const std::size_t limit = std::min(f, max_features.value_or(f));

  while (res.selected_indices.size() < limit) {
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < f; ++j) {
      if (!used[j]) candidates.push_back(j);
    }
    std::vector<double> tv(candidates.size());
    parallel_for(candidates.size(), jobs, [&](std::size_t c) {
      Matrix sel(x_all.rows(), static_cast<Eigen::Index>(res.selected_indices.size() + 1));
      for (std::size_t s = 0; s < res.selected_indices.size(); ++s) {
        sel.col(s) = x_all.col(res.selected_indices[s]);
      }
      sel.col(sel.cols() - 1) = x_all.col(candidates[c]);
      tv[c] = total_variance(sel, y, cfg);
    });
    double best = current;
    std::optional<std::size_t> best_feature;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (tv[c] < best) {
        best = tv[c];
        best_feature = candidates[c];
      }
    }
    if (!best_feature || !(current - best >= epsilon)) break;
    used[*best_feature] = true;
    res.selected_indices.push_back(*best_feature);
    res.selected_feature_ids.push_back(feature_ids[*best_feature]);
    res.totalvariance_trace.push_back(best);
    current = best;
  }
  return res;
}

double information_content(const Matrix& x_subset, const Matrix& x_full, int k, std::uint64_t seed) {
  if (x_subset.cols() > x_full.cols()) throw RangeError("subset wider than the full set");
  if (x_full.rows() < 50) throw InsufficientDataError("information_content needs n >= 50");
  if (x_subset.cols() == 0) return 0.0;
  if (x_subset.rows() != x_full.rows()) throw RangeError("subset and full set differ in rows");
  double h_full = kl_entropy(standardize(x_full).values, k, seed);
  if (!(h_full > 0.0)) {
    throw DegenerateEntropyError("joint entropy of the full set is " + format_double(h_full));
  }
  double h_sub = kl_entropy(standardize(x_subset).values, k, seed);
  return h_sub / h_full;
}

std::string selection_to_json(const SelectionResult& r, const std::string& config_hash) {
  nlohmann::json j;
  j["selected"] = r.selected_feature_ids;
  j["trace"] = r.totalvariance_trace;
  if (std::isfinite(r.epsilon)) j["epsilon"] = r.epsilon;
  else j["epsilon"] = "inf";
  j["catalog_version"] = r.catalog_version;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

SelectionResult parse_selection_json(std::string_view text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  SelectionResult r;
  try {
    r.selected_feature_ids = j.at("selected").get<std::vector<std::string>>();
    r.totalvariance_trace = j.at("trace").get<std::vector<double>>();
    const auto& eps = j.at("epsilon");
    r.epsilon = eps.is_string() ? std::numeric_limits<double>::infinity() : eps.get<double>();
    r.catalog_version = j.value("catalog_version", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  return r;
}

}  // namespace ticbench
