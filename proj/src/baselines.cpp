#include "ticbench/baselines.hpp"

#include "ticbench/errors.hpp"
#include "ticbench/features.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

namespace ticbench {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) {
    std::size_t at = pos_;
    float f = std::bit_cast<float>(u32(what));
    if (!std::isfinite(f)) throw FormatError(origin_ + ": non-finite value at byte " + std::to_string(at));
    return f;
  }
  std::string str(std::size_t len, const char* what) {
    need(len, what);
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }
  void need(std::size_t len, const char* what) {
    if (bytes_.size() - pos_ < len) {
      throw FormatError(origin_ + ": truncated " + what + " at byte " + std::to_string(pos_));
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string pairs_to_bytes(const std::vector<EmbeddingLabelPair>& pairs) {
  std::string out = "TTEH";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(pairs.size()));
  for (const auto& p : pairs) {
    if (static_cast<std::size_t>(p.features.rows()) != p.labels.size()) {
      throw RangeError("window " + p.window_id + ": token and label counts differ");
    }
    put_u32(out, static_cast<std::uint32_t>(p.window_id.size()));
    out += p.window_id;
    put_u32(out, static_cast<std::uint32_t>(p.features.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.features.cols()));
    for (Eigen::Index i = 0; i < p.features.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.features.cols(); ++j) put_f32(out, p.features(i, j));
    }
    for (double v : p.labels) put_f32(out, v);
  }
  return out;
}

std::vector<EmbeddingLabelPair> parse_pairs(std::string_view bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.str(4, "magic") != "TTEH") throw FormatError(origin + ": bad magic, expected TTEH");
  auto version = r.u32("version");
  if (version != 1) throw FormatError(origin + ": unsupported version " + std::to_string(version));
  auto n = r.u32("window count");
  std::vector<EmbeddingLabelPair> out;
  for (std::uint32_t w = 0; w < n; ++w) {
    EmbeddingLabelPair p;
    auto id_len = r.u32("id length");
    p.window_id = r.str(id_len, "window id");
    auto t = r.u32("token count");
    auto d = r.u32("hidden dim");
    if (t < 2 || d < 1) {
      throw FormatError(origin + ": window " + p.window_id + " needs T >= 2 and d >= 1");
    }
    r.need(static_cast<std::size_t>(t) * (d + 1) * 4, "payload");
    p.features.resize(t, d);
    for (std::uint32_t i = 0; i < t; ++i) {
      for (std::uint32_t j = 0; j < d; ++j) p.features(i, j) = r.f32("features");
    }
    p.labels.resize(t);
    for (std::uint32_t i = 0; i < t; ++i) p.labels[i] = r.f32("labels");
    out.push_back(std::move(p));
  }
  if (r.pos() != r.size()) {
    throw FormatError(origin + ": trailing bytes at byte " + std::to_string(r.pos()));
  }
  return out;
}

std::vector<EmbeddingLabelPair> load_pairs(const std::filesystem::path& path) {
  return parse_pairs(read_file(path), path.string());
}

void write_pairs(const std::filesystem::path& path, const std::vector<EmbeddingLabelPair>& pairs) {
  atomic_write(path, pairs_to_bytes(pairs));
}

namespace {

Vector centered_labels(const std::vector<double>& y, const char* who) {
  Vector v = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  for (double x : y) {
    if (!std::isfinite(x)) throw NumericError(std::string(who) + ": non-finite label");
  }
  v.array() -= v.mean();
  return v;
}

void check_shapes(const Matrix& f, const std::vector<double>& y, const char* who) {
  if (static_cast<std::size_t>(f.rows()) != y.size()) {
    throw RangeError(std::string(who) + ": feature rows and labels differ in length");
  }
  if (y.size() < 2) throw InsufficientDataError(std::string(who) + " needs n >= 2");
  if (f.cols() < 1) throw RangeError(std::string(who) + " needs d >= 1");
  if (!f.allFinite()) throw NumericError(std::string(who) + ": non-finite features");
}

}  // namespace

double logme_evidence(const Vector& s, std::size_t d, const Vector& z, double y_sq_norm, std::size_t n,
                      double alpha, double beta) {
  double m2 = 0.0, res2 = 0.0, logdet = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    double s2 = s(i) * s(i);
    double denom = alpha + beta * s2;
    m2 += beta * beta * s2 * z(i) * z(i) / (denom * denom);
    res2 += z(i) * z(i) * alpha * alpha / (denom * denom);
    logdet += std::log(denom);
  }
  res2 += std::max(0.0, y_sq_norm - z.squaredNorm());
  logdet += static_cast<double>(d - static_cast<std::size_t>(s.size())) * std::log(alpha);
  const double nn = static_cast<double>(n);
  double ev = 0.5 * nn * std::log(beta) + 0.5 * static_cast<double>(d) * std::log(alpha) -
              0.5 * nn * std::log(2.0 * std::numbers::pi) - 0.5 * beta * res2 - 0.5 * alpha * m2 - 0.5 * logdet;
  return ev / nn;
}

double logme(const Matrix& f, const std::vector<double>& y) {
  check_shapes(f, y, "logme");
  Vector yc = centered_labels(y, "logme");
  const double y_sq = yc.squaredNorm();
  if (population_variance(y) <= 0.0 || y_sq <= 0.0) throw DegenerateLabelError("logme: labels have zero variance");
  const std::size_t n = y.size();
  const std::size_t d = static_cast<std::size_t>(f.cols());

  Eigen::JacobiSVD<Matrix> svd(f, Eigen::ComputeThinU);
  Vector s = svd.singularValues();
  double tol = std::max(f.rows(), f.cols()) * std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  s.conservativeResize(rank);
  Vector z = svd.matrixU().leftCols(rank).transpose() * yc;

  double alpha = 1.0, beta = 1.0;
  double prev = logme_evidence(s, d, z, y_sq, n, alpha, beta);
  for (int it = 0; it < 100; ++it) {
    double gamma = 0.0, m2 = 0.0, res2 = 0.0;
    for (Eigen::Index i = 0; i < rank; ++i) {
      double s2 = s(i) * s(i);
      double denom = alpha + beta * s2;
      gamma += beta * s2 / denom;
      m2 += beta * beta * s2 * z(i) * z(i) / (denom * denom);
      res2 += z(i) * z(i) * alpha * alpha / (denom * denom);
    }
    res2 += std::max(0.0, y_sq - z.squaredNorm());
    alpha = m2 > 0.0 ? std::min(kLogmeCap, gamma / m2) : kLogmeCap;
    beta = res2 > 0.0 ? std::min(kLogmeCap, (static_cast<double>(n) - gamma) / res2) : kLogmeCap;
    alpha = std::max(alpha, 1.0 / kLogmeCap);
    beta = std::max(beta, 1.0 / kLogmeCap);
    double ev = logme_evidence(s, d, z, y_sq, n, alpha, beta);
    bool done = std::abs(ev - prev) < 1e-3;
    prev = ev;
    if (done) break;
  }
  return prev;
}

double lfc(const Matrix& f, const std::vector<double>& y) {
  check_shapes(f, y, "lfc");
  Vector yc = centered_labels(y, "lfc");
  Matrix k = f * f.transpose();
  Vector row_mean = k.rowwise().mean();
  Vector col_mean = k.colwise().mean().transpose();
  double all_mean = k.mean();
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < k.cols(); ++j) k(i, j) = k(i, j) - row_mean(i) - col_mean(j) + all_mean;
  }
  double k_norm = k.norm();
  double y_norm = yc.squaredNorm();  // Frobenius norm of y y^T
  if (k_norm < 1e-12 || y_norm < 1e-12) return 0.0;
  double inner = yc.dot(k * yc);
  return std::clamp(inner / (k_norm * y_norm), -1.0, 1.0);
}

double regscore(const Matrix& f, const std::vector<double>& y) {
  check_shapes(f, y, "regscore");
  Vector yc = centered_labels(y, "regscore");
  Matrix fc = f.rowwise() - f.colwise().mean();
  double lambda = 1e-6 * (f.transpose() * f).trace() / static_cast<double>(f.cols());
  Vector resid = yc;
  if (lambda > 0.0 && fc.squaredNorm() > 0.0) {
    Matrix gram = fc.transpose() * fc;
    gram.diagonal().array() += lambda;
    Vector w = gram.ldlt().solve(fc.transpose() * yc);
    resid = yc - fc * w;
  }
  return -resid.squaredNorm() / static_cast<double>(y.size());
}

MetaLearnerModel meta_fit(const ContextTable& ctx, double ridge_lambda) {
  if (ctx.size() == 0) throw EmptyContextError("meta_fit needs context rows");
  if (!(ridge_lambda >= 0.0)) throw RangeError("ridge_lambda must be non-negative");
  auto z = standardize(ctx.inputs());
  Vector y = ctx.labels();
  const double y_mean = y.mean();
  const double y_std = std::sqrt((y.array() - y_mean).square().mean());
  const auto p = z.values.cols();

  MetaLearnerModel model;
  model.ridge_lambda = ridge_lambda;
  model.training_row_count = ctx.size();
  model.weights = Vector::Zero(p);
  model.intercept = y_mean;
  if (y_std == 0.0) return model;

  Vector ys = (y.array() - y_mean) / y_std;
  Matrix gram = z.values.transpose() * z.values;
  gram.diagonal().array() += ridge_lambda;
  Vector rhs = z.values.transpose() * ys;
  Vector w;
  if (ridge_lambda > 0.0) {
    w = gram.llt().solve(rhs);
  } else {
    Eigen::ColPivHouseholderQR<Matrix> qr(gram);
    if (qr.rank() < p) {
      throw SingularSystemError("meta_fit: normal equations are singular (rank " + std::to_string(qr.rank()) +
                                " < " + std::to_string(p) + ")");
    }
    w = qr.solve(rhs);
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    model.weights(j) = y_std * w(j) / z.stats.std[j];
    model.intercept -= model.weights(j) * z.stats.mean[j];
  }
  if (!model.weights.allFinite() || !std::isfinite(model.intercept)) {
    throw NumericError("meta_fit produced non-finite weights");
  }
  return model;
}

std::vector<double> meta_predict(const MetaLearnerModel& model, const TargetTable& tgt) {
  Matrix x = tgt.inputs();
  if (x.cols() != model.weights.size()) {
    throw FormatError("meta model expects " + std::to_string(model.weights.size()) + " inputs, target has " +
                      std::to_string(x.cols()));
  }
  Vector pred = (x * model.weights).array() + model.intercept;
  return {pred.data(), pred.data() + pred.size()};
}

ScoreRecord zero_shot_score(const std::vector<PerformanceRecord>& records) {
  if (records.empty()) throw EmptyPredictionError("zero_shot_score needs at least one record");
  ScoreRecord s;
  s.method = "zero_shot";
  s.model_id = records.front().model_id;
  s.dataset_id = records.front().dataset_id;
  s.task = records.front().task;
  double sum = 0.0;
  for (const auto& r : records) {
    if (r.model_id != s.model_id || r.dataset_id != s.dataset_id || r.task != s.task) {
      throw RangeError("zero_shot_score records span more than one (model, dataset, task)");
    }
    sum += r.zero_shot_mase;
  }
  s.n_target_rows = records.size();
  s.raw_mean_prediction = sum / static_cast<double>(records.size());
  s.score = -s.raw_mean_prediction;
  return s;
}

std::string to_string(WindowMethod m) {
  switch (m) {
    case WindowMethod::logme: return "logme";
    case WindowMethod::lfc: return "lfc";
    case WindowMethod::regscore: return "regscore";
  }
  return "logme";
}

ScoreRecord window_baseline_score(WindowMethod method, const std::vector<EmbeddingLabelPair>& pairs,
                                  const std::string& model_id, const std::string& dataset_id, TaskName task) {
  if (pairs.empty()) throw EmptyPredictionError("no embedding-label windows for " + model_id + " on " + dataset_id);
  double sum = 0.0;
  for (const auto& p : pairs) {
    switch (method) {
      case WindowMethod::logme: sum += logme(p.features, p.labels); break;
      case WindowMethod::lfc: sum += lfc(p.features, p.labels); break;
      case WindowMethod::regscore: sum += regscore(p.features, p.labels); break;
    }
  }
  ScoreRecord s;
  s.method = to_string(method);
  s.model_id = model_id;
  s.dataset_id = dataset_id;
  s.task = task;
  s.n_target_rows = pairs.size();
  s.score = sum / static_cast<double>(pairs.size());
  s.raw_mean_prediction = -s.score;
  return s;
}

}  // namespace ticbench
