#include "ticbench/entropy.hpp"
#include "ticbench/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace ticbench;

namespace {

const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

Matrix gaussian(int n, int d, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

// Brute-force k-th neighbour distances, written independently of the library.
std::vector<double> naive_kth(const Matrix& x, int k) {
  std::vector<double> out;
  for (int i = 0; i < x.rows(); ++i) {
    std::vector<double> d;
    for (int j = 0; j < x.rows(); ++j) {
      if (j != i) d.push_back((x.row(i) - x.row(j)).norm());
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    out.push_back(d[k - 1]);
  }
  return out;
}

}  // namespace

TEST(KthNeighbor, KdTreeAgreesWithBruteForce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 10 + static_cast<int>(rng() % 400);
    int d = 1 + static_cast<int>(rng() % 6);
    int k = 1 + static_cast<int>(rng() % 5);
    Matrix x = gaussian(n, d, trial);
    if (trial % 7 == 0) x = (x.array() * 4.0).round() / 4.0;  // ties on a grid
    auto a = kth_neighbor_distances(x, k, NeighborSearch::kd_tree);
    auto b = kth_neighbor_distances(x, k, NeighborSearch::brute_force);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-9) << trial << " " << i;
  }
}

TEST(KthNeighbor, MatchesNaiveOracle) {
  Matrix x = gaussian(120, 3, 4);
  auto a = kth_neighbor_distances(x, 3);
  auto b = naive_kth(x, 3);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(KlEntropy, MatchesFormulaOnSmallSet) {
  Matrix x = gaussian(50, 2, 6);
  auto eps = naive_kth(x, 3);
  double acc = 0.0;
  for (double e : eps) acc += std::log(e);
  double expect = digamma_int(50) - digamma_int(3) + std::log(std::numbers::pi) + 2.0 / 50.0 * acc;
  EXPECT_NEAR(kl_entropy(x, 3), expect, 1e-12);
}

TEST(KlEntropy, DigammaAndBallVolume) {
  EXPECT_NEAR(digamma_int(1), -0.5772156649015329, 1e-14);
  EXPECT_NEAR(digamma_int(4), -0.5772156649015329 + 1.0 + 0.5 + 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(log_unit_ball_volume(1), std::log(2.0), 1e-14);
  EXPECT_NEAR(log_unit_ball_volume(2), std::log(std::numbers::pi), 1e-14);
  EXPECT_NEAR(log_unit_ball_volume(3), std::log(4.0 / 3.0 * std::numbers::pi), 1e-14);
}

TEST(KlEntropy, AnalyticDistributions) {
  EXPECT_NEAR(kl_entropy(gaussian(10000, 1, 11)), kHalfLog2PiE, 0.05);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix uni(10000, 1);
  for (int i = 0; i < uni.rows(); ++i) uni(i, 0) = u(rng);
  EXPECT_NEAR(kl_entropy(uni), 0.0, 0.05);
  Matrix g2 = gaussian(10000, 2, 13);
  g2.col(1) *= 2.0;
  EXPECT_NEAR(kl_entropy(g2), 2.0 * kHalfLog2PiE + 0.5 * std::log(4.0), 0.07);
}

TEST(KlEntropy, TranslationInvariantOnDyadicGrid) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x(300, 3);
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < 3; ++j) x(i, j) = static_cast<double>(static_cast<int>(rng() % 4096) - 2048) / 1024.0;
    Eigen::RowVectorXd c(3);
    for (int j = 0; j < 3; ++j) c(j) = static_cast<double>(static_cast<int>(rng() % 64) - 32) / 8.0;
    Matrix y = x.rowwise() + c;
    EXPECT_EQ(kl_entropy(x, 3, 5), kl_entropy(y, 3, 5)) << trial;
  }
}

TEST(KlEntropy, ScalingLaw) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> ua(0.05, 20.0);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 1 + trial % 4;
    Matrix x = gaussian(500, d, 100 + trial);
    double a = ua(rng);
    EXPECT_NEAR(kl_entropy(a * x) - kl_entropy(x), d * std::log(a), 1e-6) << trial;
  }
}

TEST(KlEntropy, DuplicatesAreJittered) {
  Matrix x = gaussian(200, 2, 16);
  x.bottomRows(100) = x.topRows(100);
  double h = kl_entropy(x, 3, 7);
  EXPECT_TRUE(std::isfinite(h));
  EXPECT_EQ(h, kl_entropy(x, 3, 7));
  Matrix same = Matrix::Constant(20, 2, 1.0);
  EXPECT_TRUE(std::isfinite(kl_entropy(same, 3, 1)));
}

TEST(KlEntropy, TooFewSamples) {
  EXPECT_THROW(kl_entropy(gaussian(3, 2, 1), 3), InsufficientSamplesError);
  EXPECT_NO_THROW(kl_entropy(gaussian(4, 2, 1), 3));
}

TEST(KlEntropy, ConsistencyImprovesWithN) {
  // Per seed, the error at each N is the mean absolute error over 10 draws.
  auto error = [](int n, std::uint64_t seed) {
    double acc = 0.0;
    for (std::uint64_t r = 0; r < 10; ++r) acc += std::abs(kl_entropy(gaussian(n, 1, seed * 100 + r)) - kHalfLog2PiE);
    return acc / 10.0;
  };
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    double e1 = error(500, 1000 + seed), e2 = error(5000, 2000 + seed), e3 = error(50000, 3000 + seed);
    monotone += (e2 <= e1 && e3 <= e2);
  }
  EXPECT_GE(monotone, 8);
}

TEST(Profile, IdenticalLayersGiveConstantProfile) {
  LayerEmbeddings e;
  Matrix layer = gaussian(300, 3, 17);
  for (int l = 0; l < 7; ++l) e.layers.push_back(layer);
  auto p = entropy_profile(e, kDefaultTokenCap, 3, 2);
  ASSERT_EQ(p.raw.size(), 7u);
  ASSERT_EQ(p.subsampled.size(), kProfileLength);
  for (double v : p.raw) EXPECT_NEAR(v, p.raw[0], 1e-9);
}

TEST(Profile, DoublingScaleShiftsByDLog2) {
  const int d = 3;
  LayerEmbeddings e;
  for (int l = 0; l < 5; ++l) e.layers.push_back(gaussian(4000, d, 30 + l, std::pow(2.0, l)));
  auto p = entropy_profile(e);
  for (std::size_t i = 0; i + 1 < p.raw.size(); ++i) {
    EXPECT_NEAR(p.raw[i + 1] - p.raw[i], d * std::log(2.0), 0.1 * d) << i;
  }
}

TEST(Profile, TokenCap) {
  Matrix layer = gaussian(20000, 2, 18);
  auto capped = cap_tokens(layer, kDefaultTokenCap, 3);
  EXPECT_EQ(capped.rows(), 10000);
  EXPECT_EQ(cap_tokens(layer.topRows(500), kDefaultTokenCap, 3).rows(), 500);
  // Capped rows are rows of the original layer.
  for (int i = 0; i < 20; ++i) {
    bool found = false;
    for (int j = 0; j < layer.rows() && !found; ++j) found = (layer.row(j).array() == capped.row(i).array()).all();
    EXPECT_TRUE(found);
  }
  LayerEmbeddings e;
  e.layers.push_back(layer);
  auto p = entropy_profile(e, kDefaultTokenCap, 3, 3);
  EXPECT_NEAR(p.raw[0], kl_entropy(capped, 3, 3), 0.05);  // a different seeded subsample
}

TEST(Profile, ShortLayerNamesIndex) {
  LayerEmbeddings e;
  e.layers.push_back(gaussian(20, 2, 1));
  e.layers.push_back(gaussian(3, 2, 2));
  try {
    entropy_profile(e);
    FAIL();
  } catch (const InsufficientSamplesError& ex) {
    EXPECT_EQ(ex.layer(), 1);
  }
}

TEST(SubsampleProfile, RoundingOracle) {
  auto iota = [](int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
  };
  EXPECT_EQ(subsample_profile(iota(6)), iota(6));
  EXPECT_EQ(subsample_profile(iota(11)), (std::vector<double>{0, 2, 4, 6, 8, 10}));
  EXPECT_EQ(subsample_profile(iota(24)), (std::vector<double>{0, 5, 9, 14, 18, 23}));
  for (int n = 6; n < 60; ++n) {
    auto s = subsample_profile(iota(n));
    for (int j = 0; j < 6; ++j) EXPECT_EQ(s[j], std::round(j * (n - 1) / 5.0)) << n;
  }
}

TEST(SubsampleProfile, InterpolatesShortProfiles) {
  auto s = subsample_profile({0.0, 10.0});
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(s[j], 2.0 * j, 1e-12);
  auto one = subsample_profile({3.0});
  for (double v : one) EXPECT_EQ(v, 3.0);
  auto three = subsample_profile({1.0, 5.0, -1.0});
  EXPECT_EQ(three.front(), 1.0);
  EXPECT_EQ(three.back(), -1.0);
  EXPECT_NEAR(three[1], 1.0 + 4.0 * 0.4, 1e-12);
}

TEST(ProfileCsv, RoundTrip) {
  EntropyProfile p;
  p.model_id = "m1";
  p.scope_id = profile_scope("ds1", TaskName::medium_term);
  p.subsampled = {1.0, 2.5, 0.1 + 0.2, -4.0, 5.0, 6.0};
  p.raw_len = 9;
  auto back = parse_profiles(profiles_to_csv({p}, "h"), "mem");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].model_id, "m1");
  EXPECT_EQ(back[0].scope_id, p.scope_id);
  EXPECT_EQ(back[0].subsampled, p.subsampled);
  EXPECT_EQ(back[0].raw_len, 9u);
  EXPECT_EQ(back[0].token_cap, kDefaultTokenCap);
}
