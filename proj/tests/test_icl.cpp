#include "ticbench/errors.hpp"
#include "ticbench/icl.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

using namespace ticbench;

namespace {

CharacteristicRow row(std::vector<double> f, double zs, std::optional<double> y, const std::string& id = "w") {
  CharacteristicRow r;
  r.model_id = "m";
  r.dataset_id = "d";
  r.window_id = id;
  r.data_features = std::move(f);
  r.entropy_features = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
  r.zero_shot_mase = zs;
  r.finetuned_mase = y;
  return r;
}

std::vector<CharacteristicRow> random_rows(int n, int nf, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<CharacteristicRow> rows;
  for (int i = 0; i < n; ++i) {
    std::vector<double> f(nf);
    for (auto& v : f) v = g(rng);
    auto r = row(f, std::abs(g(rng)) + 0.5, std::abs(g(rng)) + 0.1, "w" + std::to_string(i));
    for (auto& h : r.entropy_features) h += 0.3 * g(rng);
    rows.push_back(r);
  }
  return rows;
}

// Independent Nadaraya-Watson smoother: all-pairs median, population-std z-scores.
std::vector<double> oracle_smoother(const std::vector<CharacteristicRow>& ctx, const std::vector<CharacteristicRow>& tgt,
                                    double multiplier) {
  const std::size_t n = ctx.size(), p = ctx[0].inputs().size();
  std::vector<double> mu(p, 0.0), sd(p, 0.0);
  for (const auto& r : ctx) {
    auto x = r.inputs();
    for (std::size_t j = 0; j < p; ++j) mu[j] += x[j] / static_cast<double>(n);
  }
  for (const auto& r : ctx) {
    auto x = r.inputs();
    for (std::size_t j = 0; j < p; ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]) / static_cast<double>(n);
  }
  for (auto& s : sd) s = s > 0 ? std::sqrt(s) : 1.0;
  auto z = [&](const CharacteristicRow& r) {
    auto x = r.inputs();
    for (std::size_t j = 0; j < p; ++j) x[j] = (x[j] - mu[j]) / sd[j];
    return x;
  };
  auto dist2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
  };
  std::vector<std::vector<double>> zc;
  for (const auto& r : ctx) zc.push_back(z(r));
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(dist2(zc[i], zc[j])));
  std::sort(d.begin(), d.end());
  double med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  double sigma = multiplier * med;
  std::vector<double> out;
  for (const auto& t : tgt) {
    auto zt = z(t);
    double ws = 0.0, wy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double w = std::exp(-dist2(zt, zc[j]) / (2.0 * sigma * sigma));
      ws += w;
      wy += w * *ctx[j].finetuned_mase;
    }
    out.push_back(wy / ws);
  }
  return out;
}

class MockService {
 public:
  MockService() {
    server_.Get("/echo/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","backend":"mock"})", "application/json");
    });
    server_.Post("/echo/predict", [this](const httplib::Request& req, httplib::Response& res) {
      int now = ++active_;
      int prev = peak_.load();
      while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
      auto j = nlohmann::json::parse(req.body);
      auto y = j["context"]["y"].get<std::vector<double>>();
      double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      last_body_ = req.body;
      std::vector<double> out(j["target"]["X"].size(), m);
      res.set_content(nlohmann::json{{"y", out}}.dump(), "application/json");
      --active_;
    });
    server_.Post("/short/predict", [](const httplib::Request& req, httplib::Response& res) {
      auto j = nlohmann::json::parse(req.body);
      std::vector<double> out(j["target"]["X"].size() - 1, 1.0);
      res.set_content(nlohmann::json{{"y", out}}.dump(), "application/json");
    });
    server_.Post("/fail/predict", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content(R"({"error":"width mismatch"})", "application/json");
    });
    server_.Post("/nan/predict", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"y":[1.0,"x"]})", "application/json");
    });
    server_.Post("/golden/predict", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = req.body;
      res.set_content(golden_response_, "application/json");
    });
    server_.Post("/slow/predict", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1500));
      res.set_content(R"({"y":[1.0]})", "application/json");
    });
    server_.Get("/down/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"loading"})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockService() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& base) const { return "http://127.0.0.1:" + std::to_string(port_) + base; }

  std::atomic<int> active_{0}, peak_{0};
  int delay_ms_ = 0;
  std::string last_body_;
  std::string golden_response_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<CharacteristicRow> fixture_context() {
  return {row({0.5, 2.0}, 1.25, 0.75, "c1"), row({1.0, -1.0}, 0.5, 1.5, "c2"), row({-2.0, 0.25}, 2.0, 0.5, "c3"),
          row({0.0, 0.0}, 1.0, 1.0, "c4"), row({3.0, 1.5}, 0.75, 2.25, "c5")};
}

std::vector<CharacteristicRow> fixture_target() {
  return {row({0.25, 1.0}, 1.0, std::nullopt, "t1"), row({-1.0, 0.5}, 1.5, std::nullopt, "t2")};
}

}  // namespace

TEST(PredictorConfig, Validation) {
  PredictorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.backend = Backend::remote;
  EXPECT_THROW(cfg.validate(), RangeError);
  cfg.endpoint_url = "http://localhost:1";
  EXPECT_NO_THROW(cfg.validate());
  cfg.backend = Backend::reference_kernel;
  EXPECT_THROW(cfg.validate(), RangeError);
  PredictorConfig bad;
  bad.bandwidth_multiplier = 0.0;
  EXPECT_THROW(bad.validate(), RangeError);
  EXPECT_EQ(parse_backend("reference_kernel"), Backend::reference_kernel);
  EXPECT_EQ(parse_backend("remote"), Backend::remote);
  EXPECT_THROW(parse_backend("tabpfn"), FormatError);
}

TEST(ReferencePredict, ConcentratesOnIdenticalRow) {
  std::vector<CharacteristicRow> ctx = {row({0.0}, 1.0, 3.25, "near")};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.001, 0.001);
  for (int i = 0; i < 30; ++i) ctx.push_back(row({5000.0 + u(rng)}, 1.0, 1.0 + i, "far" + std::to_string(i)));
  auto c = ContextTable::from_rows(ctx);
  auto t = TargetTable::from_rows({row({0.0}, 1.0, std::nullopt)});
  auto p = reference_predict(c, t, PredictorConfig{});
  EXPECT_NEAR(p[0], 3.25, 1e-6);
}

TEST(ReferencePredict, ConstantLabelsExact) {
  auto rows = random_rows(60, 3, 4);
  for (auto& r : rows) r.finetuned_mase = 0.1;
  auto tgt = random_rows(20, 3, 5);
  auto p = reference_predict(ContextTable::from_rows(rows), TargetTable::from_rows(tgt), PredictorConfig{});
  for (double v : p) EXPECT_EQ(v, 0.1);
}

TEST(ReferencePredict, MatchesOracleSmoother) {
  auto ctx = random_rows(50, 4, 6);
  auto tgt = random_rows(15, 4, 7);
  for (double mult : {1.0, 0.5, 2.0}) {
    PredictorConfig cfg;
    cfg.bandwidth_multiplier = mult;
    auto p = reference_predict(ContextTable::from_rows(ctx), TargetTable::from_rows(tgt), cfg);
    auto o = oracle_smoother(ctx, tgt, mult);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], o[i], 1e-12) << mult << " " << i;
  }
}

TEST(ReferencePredict, LinearGridInterior) {
  std::vector<CharacteristicRow> ctx, tgt;
  for (int i = 0; i <= 1000; ++i) {
    double f = i / 1000.0;
    ctx.push_back(row({f}, 1.0, 2.0 * f, "g" + std::to_string(i)));
  }
  for (int i = 0; i <= 50; ++i) tgt.push_back(row({0.25 + 0.01 * i}, 1.0, std::nullopt));
  PredictorConfig cfg;
  cfg.bandwidth_multiplier = 0.5;
  auto p = reference_predict(ContextTable::from_rows(ctx), TargetTable::from_rows(tgt), cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - 2.0 * tgt[i].data_features[0]));
  EXPECT_LE(worst, 0.05);
}

TEST(ReferencePredict, ConvexCombinationProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto ctx = random_rows(10 + static_cast<int>(seed) * 7, 2, 100 + seed);
    auto tgt = random_rows(25, 2, 200 + seed);
    for (auto& r : tgt) r.data_features[0] *= 50.0;  // far targets too
    PredictorConfig cfg;
    cfg.bandwidth_multiplier = 0.05 + 0.2 * static_cast<double>(seed);
    auto p = reference_predict(ContextTable::from_rows(ctx), TargetTable::from_rows(tgt), cfg);
    double lo = 1e300, hi = -1e300;
    for (const auto& r : ctx) lo = std::min(lo, *r.finetuned_mase), hi = std::max(hi, *r.finetuned_mase);
    for (double v : p) {
      EXPECT_GE(v, lo);
      EXPECT_LE(v, hi);
    }
  }
}

TEST(ReferencePredict, UnderflowFallsBackToNearestMean) {
  std::vector<CharacteristicRow> ctx;
  for (int i = 0; i < 40; ++i) ctx.push_back(row({static_cast<double>(i % 2), 0.01 * i}, 1.0, i, "w" + std::to_string(i)));
  auto tgt = TargetTable::from_rows({row({1e6, 0.0}, 1.0, std::nullopt)});
  PredictorConfig cfg;
  cfg.knn_fallback_k = 3;
  auto p = reference_predict(ContextTable::from_rows(ctx), tgt, cfg);
  // Nearest three to (+inf, 0) in standardized space are odd rows with the smallest second feature.
  EXPECT_NEAR(p[0], (1.0 + 3.0 + 5.0) / 3.0, 1e-12);
}

TEST(ReferencePredict, DeterministicAndShiftEquivariant) {
  auto ctx = random_rows(3000, 3, 8);  // > 2000 pairs: sampled bandwidth
  auto tgt = random_rows(40, 3, 9);
  PredictorConfig cfg;
  cfg.seed = 5;
  auto c = ContextTable::from_rows(ctx);
  auto t = TargetTable::from_rows(tgt);
  auto a = reference_predict(c, t, cfg);
  EXPECT_EQ(a, reference_predict(c, t, cfg));
  auto shifted = ctx;
  for (auto& r : shifted) r.finetuned_mase = *r.finetuned_mase + 7.5;
  auto b = reference_predict(ContextTable::from_rows(shifted), t, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], a[i] + 7.5, 1e-12);
  auto order = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    return idx;
  };
  EXPECT_EQ(order(a), order(b));
}

TEST(MedianDistance, AllPairsAndFallbacks) {
  Matrix z(4, 1);
  z << 0, 1, 3, 6;
  // Pairwise: 1,3,6,2,5,3 -> sorted 1,2,3,3,5,6 -> median 3.
  EXPECT_DOUBLE_EQ(median_pairwise_distance(z, 0), 3.0);
  Matrix dup(5, 1);
  dup << 0, 0, 0, 0, 2;
  EXPECT_DOUBLE_EQ(median_pairwise_distance(dup, 0), 2.0);
  EXPECT_EQ(median_pairwise_distance(Matrix::Zero(4, 2), 0), 1.0);
}

TEST(Transferability, MeanAndMedian) {
  auto s = transferability_score({1.0, 2.0, 3.0}, "m", "d", TaskName::short_term);
  EXPECT_EQ(s.raw_mean_prediction, 2.0);
  EXPECT_EQ(s.score, -2.0);
  EXPECT_EQ(s.n_target_rows, 3u);
  EXPECT_EQ(transferability_score({0.7}, "m", "d", TaskName::short_term).raw_mean_prediction, 0.7);
  auto p = transferability_score({3.0, 1.0, 2.0}, "m", "d", TaskName::short_term);
  EXPECT_EQ(p.score, s.score);
  EXPECT_EQ(transferability_score({1.0, 100.0, 2.0, 3.0}, "m", "d", TaskName::short_term, Aggregation::median).score, -2.5);
  EXPECT_THROW(transferability_score({}, "m", "d", TaskName::short_term), EmptyPredictionError);
}

TEST(WireProtocol, ResponseValidation) {
  EXPECT_EQ(parse_predict_response(R"({"y":[1.5,2]})", 2), (std::vector<double>{1.5, 2.0}));
  EXPECT_THROW(parse_predict_response(R"({"y":[1.5]})", 2), BackendError);
  EXPECT_THROW(parse_predict_response(R"({"z":[1.5]})", 1), BackendError);
  EXPECT_THROW(parse_predict_response("not json", 1), BackendError);
  EXPECT_THROW(parse_predict_response(R"({"y":[null]})", 1), BackendError);
}

TEST(Remote, GoldenFixtureRoundTrip) {
  MockService svc;
  const std::string dir = TICBENCH_FIXTURES;
  auto request = build_predict_request(ContextTable::from_rows(fixture_context()), TargetTable::from_rows(fixture_target()));
  if (std::getenv("TICBENCH_RECORD_FIXTURES")) {
    std::ofstream(dir + "/predict_request.json", std::ios::binary) << request;
  }
  auto golden = slurp(dir + "/predict_request.json");
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(request, golden);
  auto j = nlohmann::json::parse(request);
  EXPECT_EQ(j["context"]["X"].size(), 5u);
  EXPECT_EQ(j["context"]["X"][0].size(), 9u);
  EXPECT_EQ(j["target"]["X"].size(), 2u);

  svc.golden_response_ = slurp(dir + "/predict_response.json");
  auto p = remote_predict(ContextTable::from_rows(fixture_context()), TargetTable::from_rows(fixture_target()),
                          svc.url("/golden"), 5000);
  EXPECT_EQ(svc.last_body_, golden);
  auto expect = parse_predict_response(svc.golden_response_, 2);
  EXPECT_EQ(p, expect);
}

TEST(Remote, MockEchoesContextMean) {
  MockService svc;
  auto ctx = fixture_context();
  double mean = 0.0;
  for (const auto& r : ctx) mean += *r.finetuned_mase / 5.0;
  PredictorConfig cfg;
  cfg.backend = Backend::remote;
  cfg.endpoint_url = svc.url("/echo/");
  auto p = predict_in_context(ContextTable::from_rows(ctx), TargetTable::from_rows(fixture_target()), cfg);
  ASSERT_EQ(p.size(), 2u);
  for (double v : p) EXPECT_DOUBLE_EQ(v, mean);
  EXPECT_EQ(remote_health(svc.url("/echo"), 2000), "mock");
}

TEST(Remote, ErrorsAreBackendErrors) {
  MockService svc;
  auto c = ContextTable::from_rows(fixture_context());
  auto t = TargetTable::from_rows(fixture_target());
  try {
    remote_predict(c, t, svc.url("/short"), 2000);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("length"), std::string::npos);
  }
  try {
    remote_predict(c, t, svc.url("/fail"), 2000);
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_NE(std::string(e.what()).find("400"), std::string::npos);
  }
  EXPECT_THROW(remote_predict(c, t, svc.url("/nan"), 2000), BackendError);
  EXPECT_THROW(remote_predict(c, t, svc.url("/slow"), 300), BackendError);
  EXPECT_THROW(remote_health(svc.url("/down"), 2000), BackendError);
  EXPECT_THROW(remote_health(svc.url("/missing"), 2000), BackendError);
  EXPECT_THROW(remote_predict(c, t, "https://127.0.0.1:1", 500), BackendError);
  EXPECT_THROW(remote_predict(c, t, "http://127.0.0.1:1", 500), BackendError);
}

TEST(Remote, InFlightRequestsBounded) {
  MockService svc;
  svc.delay_ms_ = 60;
  auto c = ContextTable::from_rows(fixture_context());
  auto t = TargetTable::from_rows(fixture_target());
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      auto p = remote_predict(c, t, svc.url("/echo"), 5000, 2);
      ok += p.size() == 2;
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 8);
  EXPECT_LE(svc.peak_.load(), 2);
  EXPECT_GE(svc.peak_.load(), 1);
}
