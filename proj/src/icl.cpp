#include "ticbench/icl.hpp"

#include "ticbench/errors.hpp"
#include "ticbench/features.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <numeric>
#include <random>

namespace ticbench {

std::string to_string(Backend b) { return b == Backend::remote ? "remote" : "reference_kernel"; }

Backend parse_backend(std::string_view s) {
  if (s == "reference_kernel" || s == "reference") return Backend::reference_kernel;
  if (s == "remote") return Backend::remote;
  throw FormatError("unknown backend '" + std::string(s) + "'");
}

void PredictorConfig::validate() const {
  if (!(bandwidth_multiplier > 0.0) || !std::isfinite(bandwidth_multiplier)) {
    throw RangeError("bandwidth_multiplier must be positive");
  }
  if (knn_fallback_k < 1) throw RangeError("knn_fallback_k must be positive");
  if (timeout_ms < 1) throw RangeError("timeout_ms must be positive");
  if (max_in_flight < 1) throw RangeError("max_in_flight must be positive");
  bool has_endpoint = endpoint_url && !endpoint_url->empty();
  if (backend == Backend::remote && !has_endpoint) throw RangeError("remote backend requires an endpoint");
  if (backend == Backend::reference_kernel && has_endpoint) {
    throw RangeError("endpoint given for the reference_kernel backend");
  }
}

double median_pairwise_distance(const Matrix& z, std::uint64_t seed, std::size_t max_pairs) {
  const auto n = static_cast<std::size_t>(z.rows());
  std::vector<double> d;
  if (n < 2) return 1.0;
  std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= max_pairs) {
    d.reserve(all_pairs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) d.push_back((z.row(i) - z.row(j)).norm());
    }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    d.reserve(max_pairs);
    while (d.size() < max_pairs) {
      std::size_t i = pick(rng), j = pick(rng);
      if (i == j) continue;
      d.push_back((z.row(i) - z.row(j)).norm());
    }
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  if (med > 0.0) return med;
  double sum = 0.0;
  std::size_t pos = 0;
  for (double v : d) {
    if (v > 0.0) {
      sum += v;
      ++pos;
    }
  }
  return pos > 0 ? sum / static_cast<double>(pos) : 1.0;
}

std::vector<double> reference_predict(const ContextTable& ctx, const TargetTable& tgt,
                                      const PredictorConfig& cfg) {
  if (ctx.size() == 0) throw EmptyContextError("context table has no rows");
  check_alignment(ctx, tgt);
  auto z = standardize(ctx.inputs());
  Matrix t = apply_standardization(tgt.inputs(), z.stats);
  Vector y = ctx.labels();
  const double y_min = y.minCoeff();
  const double y_max = y.maxCoeff();
  const double sigma = cfg.bandwidth_multiplier * median_pairwise_distance(z.values, cfg.seed);
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const std::size_t k = std::min<std::size_t>(cfg.knn_fallback_k, ctx.size());

  std::vector<double> out(tgt.size());
  Vector d2(z.values.rows());
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    d2 = (z.values.rowwise() - t.row(r)).rowwise().squaredNorm();
    double wsum = 0.0, wy = 0.0;
    for (Eigen::Index j = 0; j < d2.size(); ++j) {
      double w = std::exp(-d2(j) * inv_two_sigma2);
      wsum += w;
      wy += w * y(j);
    }
    double pred;
    if (wsum >= 1e-300) {
      pred = wy / wsum;
    } else {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(d2.size()));
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return d2(a) < d2(b); });
      pred = 0.0;
      for (std::size_t j = 0; j < k; ++j) pred += y(idx[j]);
      pred /= static_cast<double>(k);
    }
    out[r] = std::clamp(pred, y_min, y_max);
  }
  return out;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Endpoint {
  std::string host_port;  // scheme://host:port
  std::string base_path;
};

Endpoint split_endpoint(const std::string& url) {
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0) throw BackendError("endpoint must be an http:// URL: " + url);
  auto slash = url.find('/', scheme.size());
  Endpoint e;
  e.host_port = url.substr(0, slash);
  if (slash != std::string::npos) e.base_path = url.substr(slash);
  while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
  if (e.host_port.size() == scheme.size()) throw BackendError("endpoint has no host: " + url);
  return e;
}

httplib::Client make_client(const Endpoint& e, int timeout_ms) {
  httplib::Client cli(e.host_port);
  auto sec = timeout_ms / 1000;
  auto usec = (timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

std::string error_detail(const httplib::Result& res) {
  if (!res) return "transport error: " + httplib::to_string(res.error());
  std::string detail = "HTTP " + std::to_string(res->status);
  try {
    auto j = nlohmann::json::parse(res->body);
    if (j.is_object() && j.contains("error")) detail += ": " + j["error"].dump();
  } catch (const nlohmann::json::exception&) {
    if (!res->body.empty()) detail += ": " + res->body.substr(0, 200);
  }
  return detail;
}

class InFlightLimiter {
 public:
  void acquire(std::size_t limit) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit; });
    ++active_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t active_ = 0;
};

InFlightLimiter& limiter() {
  static InFlightLimiter instance;
  return instance;
}

struct InFlightGuard {
  explicit InFlightGuard(std::size_t limit) { limiter().acquire(limit); }
  ~InFlightGuard() { limiter().release(); }
  InFlightGuard(const InFlightGuard&) = delete;
  InFlightGuard& operator=(const InFlightGuard&) = delete;
};

}  // namespace

std::string build_predict_request(const ContextTable& ctx, const TargetTable& tgt) {
  check_alignment(ctx, tgt);
  Vector y = ctx.labels();
  nlohmann::json body;
  body["context"]["X"] = matrix_json(ctx.inputs());
  body["context"]["y"] = std::vector<double>(y.data(), y.data() + y.size());
  body["target"]["X"] = matrix_json(tgt.inputs());
  return body.dump();
}

std::vector<double> parse_predict_response(std::string_view body, std::size_t expected_rows) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("malformed response body: ") + e.what());
  }
  if (!j.is_object() || !j.contains("y") || !j["y"].is_array()) {
    throw BackendError("response body lacks a \"y\" array");
  }
  const auto& arr = j["y"];
  if (arr.size() != expected_rows) {
    throw BackendError("response length " + std::to_string(arr.size()) + " != target rows " +
                       std::to_string(expected_rows));
  }
  std::vector<double> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw BackendError("prediction " + std::to_string(i) + " is not a number");
    double v = arr[i].get<double>();
    if (!std::isfinite(v)) throw BackendError("prediction " + std::to_string(i) + " is not finite");
    out.push_back(v);
  }
  return out;
}

std::vector<double> remote_predict(const ContextTable& ctx, const TargetTable& tgt,
                                   const std::string& endpoint, int timeout_ms,
                                   std::size_t max_in_flight) {
  if (ctx.size() == 0) throw EmptyContextError("context table has no rows");
  auto e = split_endpoint(endpoint);
  std::string body = build_predict_request(ctx, tgt);
  InFlightGuard guard(max_in_flight);
  auto cli = make_client(e, timeout_ms);
  auto res = cli.Post(e.base_path + "/predict", body, "application/json");
  if (!res || res->status != 200) throw BackendError("POST /predict failed: " + error_detail(res));
  return parse_predict_response(res->body, tgt.size());
}

std::string remote_health(const std::string& endpoint, int timeout_ms) {
  auto e = split_endpoint(endpoint);
  auto cli = make_client(e, timeout_ms);
  auto res = cli.Get(e.base_path + "/health");
  if (!res || res->status != 200) throw BackendError("GET /health failed: " + error_detail(res));
  try {
    auto j = nlohmann::json::parse(res->body);
    if (j.at("status").get<std::string>() != "ok") throw BackendError("service reports status " + j["status"].dump());
    return j.value("backend", std::string("unknown"));
  } catch (const nlohmann::json::exception& ex) {
    throw BackendError(std::string("malformed health body: ") + ex.what());
  }
}

std::vector<double> predict_in_context(const ContextTable& ctx, const TargetTable& tgt,
                                       const PredictorConfig& cfg) {
  cfg.validate();
  if (cfg.backend == Backend::remote) {
    return remote_predict(ctx, tgt, *cfg.endpoint_url, cfg.timeout_ms, cfg.max_in_flight);
  }
  return reference_predict(ctx, tgt, cfg);
}

ScoreRecord transferability_score(const std::vector<double>& predictions, const std::string& model_id,
                                  const std::string& dataset_id, TaskName task, Aggregation aggregation,
                                  const std::string& method) {
  if (predictions.empty()) throw EmptyPredictionError("no predictions for " + model_id + " on " + dataset_id);
  for (double p : predictions) {
    if (!std::isfinite(p)) throw NumericError("non-finite prediction for " + model_id + " on " + dataset_id);
  }
  ScoreRecord s;
  s.method = method;
  s.model_id = model_id;
  s.dataset_id = dataset_id;
  s.task = task;
  s.n_target_rows = predictions.size();
  if (aggregation == Aggregation::median) {
    std::vector<double> v(predictions);
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    s.raw_mean_prediction = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  } else {
    s.raw_mean_prediction = mean_of(predictions);
  }
  s.score = -s.raw_mean_prediction;
  return s;
}

}  // namespace ticbench
