#include "oracles.hpp"
#include "ticbench/baselines.hpp"
#include "ticbench/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
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

std::vector<double> col(const Matrix& x, int j) { return {x.col(j).data(), x.col(j).data() + x.rows()}; }

double pop_var(const std::vector<double>& y) {
  double m = 0.0, v = 0.0;
  for (double x : y) m += x / static_cast<double>(y.size());
  for (double x : y) v += (x - m) * (x - m) / static_cast<double>(y.size());
  return v;
}

std::vector<CharacteristicRow> meta_rows(int n, int nf, std::uint64_t seed, const std::vector<double>* w = nullptr) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<CharacteristicRow> rows;
  for (int i = 0; i < n; ++i) {
    CharacteristicRow r;
    r.model_id = "m";
    r.dataset_id = "d";
    r.window_id = "w" + std::to_string(i);
    for (int j = 0; j < nf; ++j) r.data_features.push_back(3.0 * g(rng) + j);
    for (int j = 0; j < 6; ++j) r.entropy_features.push_back(g(rng) - 2.0 * j);
    r.zero_shot_mase = std::abs(g(rng)) + 0.2;
    if (w) {
      auto x = r.inputs();
      double y = 0.7;
      for (std::size_t j = 0; j < x.size(); ++j) y += (*w)[j] * x[j];
      r.finetuned_mase = y;
    } else {
      r.finetuned_mase = std::abs(g(rng)) + 0.1;
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST(Logme, MatchesDenseEvidenceAtFixedPoint) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Matrix f = gaussian(8, 2, seed);
    auto y = col(gaussian(8, 1, 100 + seed), 0);
    Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeThinU);
    Vector yc = Eigen::Map<const Vector>(y.data(), 8);
    yc.array() -= yc.mean();
    Vector z = svd.matrixU().transpose() * yc;
    for (double a : {0.01, 1.0, 50.0}) {
      for (double b : {0.1, 2.0}) {
        EXPECT_NEAR(logme_evidence(svd.singularValues(), 2, z, yc.squaredNorm(), 8, a, b),
                    oracle::dense_evidence(f, y, a, b), 1e-10);
      }
    }
  }
}

TEST(Logme, AgreesWithGridSearch) {
  std::mt19937_64 rng(7);
  int agree = 0;
  for (int trial = 0; trial < 10; ++trial) {
    int n = 3 + static_cast<int>(rng() % 8);
    int d = 1 + static_cast<int>(rng() % 3);
    Matrix f = gaussian(n, d, 200 + trial);
    auto noise = col(gaussian(n, 1, 300 + trial), 0);
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = f.row(i).sum() + 0.5 * noise[i];
    double grid = oracle::grid_evidence_max(f, y);
    agree += std::abs(logme(f, y) - grid) <= 1e-2;
  }
  EXPECT_GE(agree, 9);
}

TEST(Logme, PerfectFitIsCappedAndFinite) {
  Matrix f = gaussian(20, 2, 3);
  f = f.rowwise() - f.colwise().mean();  // labels are centered, so zero residual needs centered features
  std::vector<double> y(20);
  for (int i = 0; i < 20; ++i) y[i] = 2.0 * f(i, 0) - f(i, 1);
  double v = logme(f, y);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 1.0);
}

TEST(Logme, ZeroFeaturesGiveNullModel) {
  auto y = col(gaussian(40, 1, 4), 0);
  double expect = -0.5 * std::log(2.0 * std::numbers::pi * pop_var(y)) - 0.5;
  EXPECT_NEAR(logme(Matrix::Zero(40, 3), y), expect, 1e-6);
}

TEST(Logme, ConstantLabelsRejected) {
  EXPECT_THROW(logme(gaussian(10, 2, 5), std::vector<double>(10, 4.0)), DegenerateLabelError);
  EXPECT_THROW(logme(gaussian(1, 2, 5), {1.0}), InsufficientDataError);
}

TEST(Lfc, DegenerateAndSignFlip) {
  Matrix same = Matrix::Constant(10, 3, 2.5);
  auto y = col(gaussian(10, 1, 6), 0);
  EXPECT_EQ(lfc(same, y), 0.0);
  EXPECT_EQ(lfc(gaussian(10, 3, 7), std::vector<double>(10, 1.0)), 0.0);
  Matrix f = gaussian(30, 4, 8);
  auto yy = col(gaussian(30, 1, 9), 0);
  auto neg = yy;
  for (auto& v : neg) v = -v;
  EXPECT_NEAR(lfc(f, yy), lfc(f, neg), 1e-12);
}

TEST(Lfc, OrthonormalRowsMatchDenseFormula) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(6, 6, 10));
  Matrix f = qr.householderQ();
  auto y = col(f, 0);
  // Dense centering-matrix formula.
  const int n = 6;
  Matrix h = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / n);
  Matrix kc = h * f * f.transpose() * h;
  Vector yv = Eigen::Map<const Vector>(y.data(), n);
  Vector yc = h * yv;
  Matrix yy = yc * yc.transpose();
  double expect = (kc.array() * yy.array()).sum() / (kc.norm() * yy.norm());
  EXPECT_NEAR(lfc(f, y), expect, 1e-9);
}

TEST(Lfc, AlwaysInUnitInterval) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    int n = 2 + static_cast<int>(s % 20);
    double v = lfc(gaussian(n, 1 + static_cast<int>(s % 5), s), col(gaussian(n, 1, 1000 + s), 0));
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Regscore, PerfectFitAndNoise) {
  Matrix f = gaussian(200, 3, 11);
  std::vector<double> y(200);
  for (int i = 0; i < 200; ++i) y[i] = 1.5 + f(i, 0) - 2.0 * f(i, 2);
  EXPECT_LE(std::abs(regscore(f, y)), 1e-9);

  Matrix big = gaussian(20000, 3, 12);
  auto yn = col(gaussian(20000, 1, 13), 0);
  for (auto& v : yn) v = 3.0 * v + 1.0;
  double var = pop_var(yn);
  EXPECT_NEAR(regscore(big, yn), -var, 0.1 * var);
}

TEST(Regscore, DuplicationInvariant) {
  Matrix f = gaussian(30, 4, 14);
  auto y = col(gaussian(30, 1, 15), 0);
  Matrix f2(60, 4);
  f2 << f, f;
  auto y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());
  EXPECT_NEAR(regscore(f2, y2), regscore(f, y), 1e-9);
}

TEST(MetaLearner, RealizableTarget) {
  std::vector<double> w = {0.3, -0.2, 0.1, 0.05, 0.5, -0.4, 0.0, 0.2, 0.9, -1.0};
  auto rows = meta_rows(80, 3, 16, &w);
  auto ctx = ContextTable::from_rows(rows);
  auto m = meta_fit(ctx, 1e-9);
  auto p = meta_predict(m, TargetTable::from_rows(rows));
  double mse = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) mse += std::pow(p[i] - *rows[i].finetuned_mase, 2) / rows.size();
  EXPECT_LE(mse, 1e-6);
  EXPECT_EQ(m.training_row_count, 80u);
  EXPECT_EQ(m.weights.size(), 10);
}

TEST(MetaLearner, ConstantLabels) {
  auto rows = meta_rows(30, 2, 17);
  for (auto& r : rows) r.finetuned_mase = 1.75;
  auto m = meta_fit(ContextTable::from_rows(rows));
  EXPECT_EQ(m.intercept, 1.75);
  EXPECT_TRUE(m.weights.isZero());
  for (double v : meta_predict(m, TargetTable::from_rows(rows))) EXPECT_EQ(v, 1.75);
}

TEST(MetaLearner, NormalEquationsOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rows = meta_rows(25 + static_cast<int>(seed), 4, 500 + seed);
    const double lam = 1e-3 * (1 + seed % 3);
    auto m = meta_fit(ContextTable::from_rows(rows), lam);
    const int n = static_cast<int>(rows.size()), p = 11;
    Matrix x(n, p);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
      auto in = rows[i].inputs();
      for (int j = 0; j < p; ++j) x(i, j) = in[j];
      y(i) = *rows[i].finetuned_mase;
    }
    Eigen::RowVectorXd mu = x.colwise().mean();
    Matrix xc = x.rowwise() - mu;
    Eigen::RowVectorXd sd = (xc.array().square().colwise().sum() / n).sqrt();
    Matrix z = xc.array().rowwise() / sd.array();
    double ym = y.mean();
    double ys = std::sqrt((y.array() - ym).square().sum() / n);
    Vector yz = (y.array() - ym) / ys;
    Matrix a = z.transpose() * z + lam * Matrix::Identity(p, p);
    Vector wz = a.fullPivLu().solve(z.transpose() * yz);
    Vector w = ys * wz.array() / sd.transpose().array();
    double b = ym - mu.dot(w);
    for (int j = 0; j < p; ++j) EXPECT_NEAR(m.weights(j), w(j), 1e-8 * (1.0 + std::abs(w(j)))) << seed;
    EXPECT_NEAR(m.intercept, b, 1e-8 * (1.0 + std::abs(b)));
  }
}

TEST(MetaLearner, SingularWithoutRidge) {
  auto rows = meta_rows(30, 2, 18);
  for (auto& r : rows) r.data_features[1] = 2.0 * r.data_features[0] + 1.0;
  EXPECT_THROW(meta_fit(ContextTable::from_rows(rows), 0.0), SingularSystemError);
  EXPECT_NO_THROW(meta_fit(ContextTable::from_rows(rows), 1e-3));
  EXPECT_THROW(meta_fit(ContextTable::from_rows(rows), -1.0), RangeError);
}

TEST(ZeroShot, Examples) {
  auto rec = [](double z, const std::string& w) {
    PerformanceRecord r;
    r.model_id = "m";
    r.dataset_id = "d";
    r.window_id = w;
    r.zero_shot_mase = z;
    return r;
  };
  EXPECT_EQ(zero_shot_score({rec(1.0, "a"), rec(1.0, "b")}).score, -1.0);
  EXPECT_EQ(zero_shot_score({rec(0.85, "a")}).score, -0.85);
  auto a = zero_shot_score({rec(0.5, "a"), rec(2.0, "b"), rec(1.25, "c")});
  auto b = zero_shot_score({rec(1.25, "c"), rec(0.5, "a"), rec(2.0, "b")});
  EXPECT_DOUBLE_EQ(a.score, b.score);
  EXPECT_EQ(a.method, "zero_shot");
  EXPECT_THROW(zero_shot_score({}), EmptyPredictionError);
  auto other = rec(1.0, "z");
  other.dataset_id = "e";
  EXPECT_THROW(zero_shot_score({rec(1.0, "a"), other}), RangeError);
}

TEST(WindowBaselines, AveragePerWindow) {
  std::vector<EmbeddingLabelPair> pairs;
  for (int w = 0; w < 3; ++w) {
    EmbeddingLabelPair p;
    p.window_id = "w" + std::to_string(w);
    p.features = gaussian(12, 3, 40 + w);
    p.labels = col(gaussian(12, 1, 50 + w), 0);
    pairs.push_back(p);
  }
  for (auto m : {WindowMethod::logme, WindowMethod::lfc, WindowMethod::regscore}) {
    double expect = 0.0;
    for (const auto& p : pairs) {
      expect += (m == WindowMethod::logme ? logme(p.features, p.labels)
                 : m == WindowMethod::lfc ? lfc(p.features, p.labels)
                                          : regscore(p.features, p.labels)) / 3.0;
    }
    auto s = window_baseline_score(m, pairs, "m", "d", TaskName::long_term);
    EXPECT_NEAR(s.score, expect, 1e-12);
    EXPECT_EQ(s.method, to_string(m));
    EXPECT_EQ(s.n_target_rows, 3u);
  }
  EXPECT_THROW(window_baseline_score(WindowMethod::lfc, {}, "m", "d", TaskName::long_term), EmptyPredictionError);
}

TEST(Tteh, RoundTripAndErrors) {
  std::vector<EmbeddingLabelPair> pairs(2);
  pairs[0].window_id = "a|1";
  pairs[0].features = gaussian(4, 2, 60);
  pairs[0].labels = {0.5, 1.5, -2.0, 3.25};
  pairs[1].window_id = "b";
  pairs[1].features = gaussian(3, 5, 61);
  pairs[1].labels = {1.0, 2.0, 3.0};
  auto bytes = pairs_to_bytes(pairs);
  EXPECT_EQ(bytes.substr(0, 4), "TTEH");
  auto back = parse_pairs(bytes, "mem");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].window_id, pairs[i].window_id);
    EXPECT_EQ(back[i].labels, pairs[i].labels);
    Matrix expect = pairs[i].features.cast<float>().cast<double>();
    EXPECT_EQ(back[i].features, expect);
  }
  EXPECT_THROW(parse_pairs(bytes.substr(0, bytes.size() - 2), "mem"), FormatError);
  EXPECT_THROW(parse_pairs(bytes + "x", "mem"), FormatError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_pairs(bad, "mem"), FormatError);
  auto mismatch = pairs;
  mismatch[0].labels.pop_back();
  EXPECT_THROW(pairs_to_bytes(mismatch), RangeError);
}
