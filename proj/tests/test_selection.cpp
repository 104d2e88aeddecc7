#include "ticbench/errors.hpp"
#include "ticbench/features.hpp"
#include "ticbench/selection.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <map>
#include <random>

using namespace ticbench;

namespace {

Matrix gaussian(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("f" + std::to_string(i));
  return out;
}

double sample_var(const Vector& v) {
  double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

double weighted_tv(const std::vector<int>& labels, const std::vector<double>& y) {
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < y.size(); ++i) groups[labels[i]].push_back(y[i]);
  double acc = 0.0;
  for (const auto& [k, g] : groups) acc += static_cast<double>(g.size()) * population_variance(g);
  return acc / static_cast<double>(y.size());
}

}  // namespace

TEST(PartitionConfig, EffectiveClusters) {
  PartitionConfig cfg;
  EXPECT_EQ(cfg.effective_clusters(3), 1);
  EXPECT_EQ(cfg.effective_clusters(100), 20);
  EXPECT_EQ(cfg.effective_clusters(10000), 100);
}

TEST(Pca2, RankOneLine) {
  Matrix x = Matrix::Zero(50, 4);
  for (int i = 0; i < 50; ++i) x(i, 0) = x(i, 1) = i * 0.3 - 2.0;
  auto r = pca2(x);
  double total = sample_var(x.col(0)) + sample_var(x.col(1));
  EXPECT_NEAR(r.variances(0), total, 1e-9);
  EXPECT_LE(r.variances(1), 1e-9);
  EXPECT_NEAR(sample_var(r.scores.col(0)), r.variances(0), 1e-9);
}

TEST(Pca2, MatchesDenseEigendecomposition) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix x = gaussian(400, 5, seed);
    x.col(1) *= 3.0;
    x.col(3) += 0.5 * x.col(1);
    auto r = pca2(x);
    Matrix c = x.rowwise() - x.colwise().mean();
    Matrix cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    EXPECT_NEAR(r.variances(0), es.eigenvalues()(4), 1e-9);
    EXPECT_NEAR(r.variances(1), es.eigenvalues()(3), 1e-9);
    EXPECT_NEAR(sample_var(r.scores.col(0)), es.eigenvalues()(4), 1e-9);
    EXPECT_NEAR(sample_var(r.scores.col(1)), es.eigenvalues()(3), 1e-9);
    for (int k = 0; k < 2; ++k) {
      Eigen::Index arg;
      r.components.col(k).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(r.components(arg, k), 0.0);
    }
  }
}

TEST(Pca2, IsotropicGaussian) {
  Matrix x = gaussian(2000, 2, 3);
  auto r = pca2(x);
  Matrix c = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> es(c.transpose() * c / 1999.0);
  EXPECT_NEAR(r.variances(0), es.eigenvalues()(1), 1e-9);
  EXPECT_NEAR(r.variances(1), es.eigenvalues()(0), 1e-9);
}

TEST(Pca2, DuplicationKeepsSubspace) {
  Matrix x = gaussian(60, 4, 9);
  x.col(0) *= 4.0;
  x.col(2) *= 2.0;
  Matrix dup(120, 4);
  dup << x, x;
  auto a = pca2(x), b = pca2(dup);
  Matrix pa = a.components * a.components.transpose();
  Matrix pb = b.components * b.components.transpose();
  EXPECT_LE((pa - pb).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pca2, DegenerateInput) {
  Matrix x = Matrix::Constant(10, 3, 2.5);
  auto r = pca2(x);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.scores.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Partition, TwoBlobsMatchBruteForce) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix x(100, 2);
  for (int i = 0; i < 100; ++i) {
    double c = i < 50 ? 0.0 : 100.0;
    x(i, 0) = c + g(rng);
    x(i, 1) = c + g(rng);
  }
  PartitionConfig cfg;
  cfg.n_clusters = 2;
  cfg.min_points_per_cluster_guard = 1;
  auto labels = partition_equivalence_classes(x, cfg);
  // Brute force over both assignments of the two natural groups.
  int same = 0, flipped = 0;
  for (int i = 0; i < 100; ++i) {
    int truth = i < 50 ? 0 : 1;
    same += labels[i] == truth;
    flipped += labels[i] == 1 - truth;
  }
  EXPECT_EQ(std::max(same, flipped), 100);
}

TEST(Partition, GuardAndDeterminism) {
  Matrix x = gaussian(3, 4, 1);
  PartitionConfig cfg;
  auto labels = partition_equivalence_classes(x, cfg);
  EXPECT_EQ(labels, (std::vector<int>{0, 0, 0}));
  Matrix big = gaussian(800, 6, 2);
  cfg.seed = 17;
  auto a = partition_equivalence_classes(big, cfg);
  auto b = partition_equivalence_classes(big, cfg);
  EXPECT_EQ(a, b);
  for (int l : a) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, cfg.effective_clusters(800));
  }
}

TEST(KMeans, LabelsPointToNearestCentroid) {
  Matrix x = gaussian(300, 2, 12);
  auto r = kmeans(x, 7, 100, 1e-6, 3);
  for (int i = 0; i < x.rows(); ++i) {
    Eigen::Index best;
    (r.centroids.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    EXPECT_EQ(r.labels[i], best);
  }
}

TEST(TotalVariance, ForcedPartition) {
  EXPECT_DOUBLE_EQ(total_variance_of_partition({0, 0, 1, 1}, {0.0, 2.0, 1.0, 1.0}), 0.5);
  EXPECT_EQ(total_variance_of_partition({0, 1, 2}, {1.0, 5.0, 9.0}), 0.0);
  EXPECT_EQ(total_variance_of_partition({0, 0, 7, 7}, {3.0, 3.0, 3.0, 3.0}), 0.0);
  // Empty cluster ids are not counted.
  EXPECT_DOUBLE_EQ(total_variance_of_partition({0, 0, 5, 5}, {0.0, 2.0, 1.0, 1.0}), 0.5);
}

TEST(TotalVariance, ConstantLabelsAndSmallN) {
  Matrix x = gaussian(50, 3, 5);
  EXPECT_EQ(total_variance(x, std::vector<double>(50, 4.0), PartitionConfig{}), 0.0);
  EXPECT_THROW(total_variance(gaussian(1, 3, 5), {1.0}, PartitionConfig{}), InsufficientDataError);
}

TEST(TotalVariance, IndependentLabelsKeepVariance) {
  Matrix x = gaussian(5000, 3, 6);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(1.0, 2.0);
  std::vector<double> y(5000);
  for (auto& v : y) v = g(rng);
  double tv = total_variance(x, y, PartitionConfig{});
  double var = population_variance(y);
  EXPECT_NEAR(tv / var, 1.0, 0.15);
}

TEST(TotalVariance, WeightedRefinementMonotone) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 20 + rng() % 300;
    std::vector<double> y(n);
    for (auto& v : y) v = g(rng) * (1 + trial % 5);
    int coarse_k = 1 + static_cast<int>(rng() % 6);
    std::vector<int> coarse(n), fine(n);
    for (std::size_t i = 0; i < n; ++i) {
      coarse[i] = static_cast<int>(rng() % coarse_k);
      fine[i] = coarse[i] * 10 + static_cast<int>(rng() % 4);
    }
    EXPECT_LE(weighted_tv(fine, y), weighted_tv(coarse, y) + 1e-12) << trial;
  }
}

TEST(GreedySelect, ExactFeatureFirst) {
  Matrix x = gaussian(2000, 5, 13);
  std::vector<double> y(2000);
  for (int i = 0; i < 2000; ++i) y[i] = x(i, 3);
  PartitionConfig cfg;
  cfg.seed = 1;
  auto r = greedy_select(x, ids(5), y, 0.001, cfg);
  ASSERT_FALSE(r.selected_indices.empty());
  // Exhaustive first-step oracle.
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (int j = 0; j < 5; ++j) {
    double tv = total_variance(x.col(j), y, cfg);
    if (tv < best) best = tv, arg = j;
  }
  EXPECT_EQ(r.selected_indices[0], arg);
  EXPECT_EQ(r.selected_feature_ids[0], "f3");
  EXPECT_DOUBLE_EQ(r.totalvariance_trace[0], best);
}

TEST(GreedySelect, NoiseStopsEarly) {
  // epsilon is absolute: labels with variance 0.01 keep TotalVariance sampling noise below it.
  Matrix x = gaussian(5000, 6, 14);
  std::mt19937_64 rng(15);
  std::normal_distribution<double> g(1.0, 0.1);
  std::vector<double> y(5000);
  for (auto& v : y) v = g(rng);
  auto r = greedy_select(x, ids(6), y, 0.001, PartitionConfig{});
  EXPECT_LE(r.selected_indices.size(), 1u);
}

TEST(GreedySelect, InfiniteEpsilonAndMaxFeatures) {
  Matrix x = gaussian(500, 6, 16);
  std::vector<double> y(500);
  for (int i = 0; i < 500; ++i) y[i] = x(i, 0) + x(i, 1) + x(i, 2);
  auto inf = greedy_select(x, ids(6), y, std::numeric_limits<double>::infinity(), PartitionConfig{});
  EXPECT_LE(inf.selected_indices.size(), 1u);
  auto capped = greedy_select(x, ids(6), y, 0.0, PartitionConfig{}, 2);
  EXPECT_LE(capped.selected_indices.size(), 2u);
}

TEST(GreedySelect, TraceDecreasesByEpsilon) {
  Matrix x = gaussian(1500, 8, 17);
  std::vector<double> y(1500);
  for (int i = 0; i < 1500; ++i) y[i] = x(i, 2) + 0.7 * x(i, 5) + 0.2 * x(i, 6);
  const double eps = 0.001;
  auto r = greedy_select(x, ids(8), y, eps, PartitionConfig{}, std::nullopt, 2);
  ASSERT_GE(r.totalvariance_trace.size(), 1u);
  for (std::size_t i = 1; i < r.totalvariance_trace.size(); ++i) {
    EXPECT_LE(r.totalvariance_trace[i], r.totalvariance_trace[i - 1] - eps);
  }
  auto again = greedy_select(x, ids(8), y, eps, PartitionConfig{}, std::nullopt, 1);
  EXPECT_EQ(again.selected_indices, r.selected_indices);
  EXPECT_EQ(again.totalvariance_trace, r.totalvariance_trace);
}

TEST(InformationContent, Conventions) {
  Matrix x = gaussian(200, 4, 18);
  EXPECT_EQ(information_content(x, x), 1.0);
  EXPECT_EQ(information_content(Matrix(200, 0), x), 0.0);
}

TEST(InformationContent, HalfOfIndependentGaussians) {
  Matrix x = gaussian(10000, 10, 19);
  double r = information_content(x.leftCols(5), x);
  EXPECT_NEAR(r, 0.5, 0.08);
}

TEST(InformationContent, DegenerateFullSet) {
  Matrix x = gaussian(200, 2, 20);
  x.col(1) = x.col(0) + 1e-6 * x.col(1);
  EXPECT_THROW(information_content(x.leftCols(1), x), DegenerateEntropyError);
}

TEST(SelectionJson, RoundTrip) {
  SelectionResult r;
  r.selected_feature_ids = {"acf_lag1", "trend_r2"};
  r.selected_indices = {default_catalog().index_of("acf_lag1"), default_catalog().index_of("trend_r2")};
  r.totalvariance_trace = {0.5, 0.1 + 0.2};
  r.catalog_version = default_catalog().version;
  auto back = parse_selection_json(selection_to_json(r, "h"), "mem");
  EXPECT_EQ(back.selected_feature_ids, r.selected_feature_ids);
  EXPECT_EQ(back.totalvariance_trace, r.totalvariance_trace);
  EXPECT_EQ(back.epsilon, r.epsilon);
  EXPECT_EQ(back.catalog_version, r.catalog_version);
}
