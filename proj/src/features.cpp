#include "ticbench/features.hpp"

#include "ticbench/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

namespace ticbench {

std::string to_string(FeatureCategory c) {
  switch (c) {
    case FeatureCategory::location: return "location";
    case FeatureCategory::dispersion: return "dispersion";
    case FeatureCategory::trend: return "trend";
    case FeatureCategory::seasonality: return "seasonality";
    case FeatureCategory::stationarity: return "stationarity";
    case FeatureCategory::dependency: return "dependency";
    case FeatureCategory::complexity: return "complexity";
  }
  return "location";
}

namespace feature {

namespace {

// Below this relative spread a window is treated as constant.
bool is_flat(std::span<const double> x, double m, double var) {
  return var <= 1e-24 * std::max(1.0, m * m);
}

double central_moment(std::span<const double> x, double m, int p) {
  double s = 0.0;
  for (double v : x) s += std::pow(v - m, p);
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

std::vector<double> diff(std::span<const double> x) {
  std::vector<double> d(x.size() - 1);
  for (std::size_t i = 1; i < x.size(); ++i) d[i - 1] = x[i] - x[i - 1];
  return d;
}

// OLS of x on t = 0..n-1.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit fit_line(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double t_mean = (n - 1.0) / 2.0;
  const double x_mean = mean(x);
  double sxy = 0.0, stt = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dt = static_cast<double>(i) - t_mean;
    double dx = x[i] - x_mean;
    sxy += dt * dx;
    stt += dt * dt;
    sxx += dx * dx;
  }
  LineFit f;
  f.slope = stt > 0.0 ? sxy / stt : 0.0;
  f.intercept = x_mean - f.slope * t_mean;
  f.r2 = (sxx > 0.0 && !is_flat(x, x_mean, sxx / n)) ? (sxy * sxy) / (stt * sxx) : 0.0;
  return f;
}

std::size_t longest_strike(std::span<const double> x, bool above) {
  double m = mean(x);
  std::size_t best = 0, run = 0;
  for (double v : x) {
    bool hit = above ? v > m : v < m;
    run = hit ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

}  // namespace

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double quantile(std::span<const double> x, double q) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double std_dev(std::span<const double> x) { return std::sqrt(variance(x)); }

double autocorrelation(std::span<const double> x, std::size_t lag) {
  if (lag >= x.size()) return 0.0;
  double m = mean(x);
  double den = 0.0;
  for (double v : x) den += (v - m) * (v - m);
  if (is_flat(x, m, den / static_cast<double>(x.size()))) return 0.0;
  double num = 0.0;
  for (std::size_t t = 0; t + lag < x.size(); ++t) num += (x[t] - m) * (x[t + lag] - m);
  return num / den;
}

double trend_slope(std::span<const double> x) { return fit_line(x).slope; }
double trend_r2(std::span<const double> x) { return fit_line(x).r2; }

double turning_point_rate(std::span<const double> x) {
  std::size_t count = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if ((x[i] - x[i - 1]) * (x[i + 1] - x[i]) < 0.0) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(x.size() - 2);
}

std::vector<double> periodogram(std::span<const double> x) {
  const std::size_t n = x.size();
  double m = mean(x);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - m;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, centered);
  std::vector<double> power(n / 2);
  for (std::size_t k = 1; k <= n / 2; ++k) power[k - 1] = std::norm(spec[k]) / static_cast<double>(n);
  return power;
}

namespace {
// Power below this fraction of the series energy counts as no signal.
bool spectrum_empty(const std::vector<double>& p, std::span<const double> x) {
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  double m = mean(x);
  return total <= 1e-24 * std::max(1.0, m * m) * static_cast<double>(x.size());
}

std::size_t dominant_bin(const std::vector<double>& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}
}  // namespace

double spectral_entropy(std::span<const double> x) {
  auto p = periodogram(x);
  if (p.size() < 2 || spectrum_empty(p, x)) return 0.0;
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      double q = v / total;
      h -= q * std::log(q);
    }
  }
  return h / std::log(static_cast<double>(p.size()));
}

double dominant_frequency(std::span<const double> x) {
  auto p = periodogram(x);
  if (p.empty() || spectrum_empty(p, x)) return 0.0;
  return static_cast<double>(dominant_bin(p) + 1) / static_cast<double>(x.size());
}

double dominant_power_share(std::span<const double> x) {
  auto p = periodogram(x);
  if (p.empty() || spectrum_empty(p, x)) return 0.0;
  return p[dominant_bin(p)] / std::accumulate(p.begin(), p.end(), 0.0);
}

double seasonal_strength(std::span<const double> x) {
  const std::size_t n = x.size();
  auto p = periodogram(x);
  if (p.empty() || spectrum_empty(p, x)) return 0.0;
  double freq = static_cast<double>(dominant_bin(p) + 1) / static_cast<double>(n);
  auto period = static_cast<std::size_t>(std::lround(1.0 / freq));
  if (period < 2 || period > n / 2) return 0.0;

  auto line = fit_line(x);
  std::vector<double> detrended(n);
  for (std::size_t t = 0; t < n; ++t) {
    detrended[t] = x[t] - (line.intercept + line.slope * static_cast<double>(t));
  }
  std::vector<double> phase_sum(period, 0.0);
  std::vector<std::size_t> phase_count(period, 0);
  for (std::size_t t = 0; t < n; ++t) {
    phase_sum[t % period] += detrended[t];
    ++phase_count[t % period];
  }
  double var_total = variance(detrended);
  if (is_flat(x, mean(x), var_total)) return 0.0;
  std::vector<double> remainder(n);
  for (std::size_t t = 0; t < n; ++t) {
    remainder[t] = detrended[t] - phase_sum[t % period] / static_cast<double>(phase_count[t % period]);
  }
  return std::clamp(1.0 - variance(remainder) / var_total, 0.0, 1.0);
}

double sample_entropy(std::span<const double> x) {
  const std::size_t n = x.size();
  double sd = std_dev(x);
  if (is_flat(x, mean(x), sd * sd) || n < 4) return 0.0;
  const double r = 0.2 * sd;
  // Templates of length 2 and 3 start at i = 0 .. n-3 (same count for both lengths).
  const std::size_t templates = n - 2;
  unsigned long long matches_m = 0, matches_m1 = 0;
  for (std::size_t i = 0; i < templates; ++i) {
    const double a0 = x[i], a1 = x[i + 1], a2 = x[i + 2];
    for (std::size_t j = i + 1; j < templates; ++j) {
      if (std::fabs(a0 - x[j]) > r || std::fabs(a1 - x[j + 1]) > r) continue;
      ++matches_m;
      if (std::fabs(a2 - x[j + 2]) <= r) ++matches_m1;
    }
  }
  if (matches_m == 0 || matches_m1 == 0) return 0.0;
  return -std::log(static_cast<double>(matches_m1) / static_cast<double>(matches_m));
}

double hurst_exponent(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> log_scale, log_rs;
  for (std::size_t s = 8; s <= n / 2; s *= 2) {
    double rs_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b + s <= n; b += s) {
      auto block = x.subspan(b, s);
      double m = mean(block);
      double cum = 0.0, lo = 0.0, hi = 0.0, ss = 0.0;
      for (double v : block) {
        cum += v - m;
        lo = std::min(lo, cum);
        hi = std::max(hi, cum);
        ss += (v - m) * (v - m);
      }
      double sd = std::sqrt(ss / static_cast<double>(s));
      if (is_flat(block, m, sd * sd)) continue;
      rs_sum += (hi - lo) / sd;
      ++used;
    }
    if (used > 0 && rs_sum > 0.0) {
      log_scale.push_back(std::log(static_cast<double>(s)));
      log_rs.push_back(std::log(rs_sum / static_cast<double>(used)));
    }
  }
  if (log_scale.size() < 2) return 0.5;
  double mx = std::accumulate(log_scale.begin(), log_scale.end(), 0.0) / log_scale.size();
  double my = std::accumulate(log_rs.begin(), log_rs.end(), 0.0) / log_rs.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < log_scale.size(); ++i) {
    sxy += (log_scale[i] - mx) * (log_rs[i] - my);
    sxx += (log_scale[i] - mx) * (log_scale[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace feature

namespace {

using namespace feature;

double f_mean(std::span<const double> x) { return feature::mean(x); }
double f_median(std::span<const double> x) { return feature::median(x); }
double f_q10(std::span<const double> x) { return quantile(x, 0.1); }
double f_q90(std::span<const double> x) { return quantile(x, 0.9); }
double f_std(std::span<const double> x) { return std_dev(x); }
double f_iqr(std::span<const double> x) { return quantile(x, 0.75) - quantile(x, 0.25); }

double f_skewness(std::span<const double> x) {
  double m = feature::mean(x);
  double m2 = central_moment(x, m, 2);
  if (is_flat(x, m, m2)) return 0.0;
  return central_moment(x, m, 3) / std::pow(m2, 1.5);
}

double f_kurtosis(std::span<const double> x) {
  double m = feature::mean(x);
  double m2 = central_moment(x, m, 2);
  if (is_flat(x, m, m2)) return 0.0;
  return central_moment(x, m, 4) / (m2 * m2) - 3.0;
}

double f_abs_energy(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

double f_mean_abs_change(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += std::fabs(x[i] - x[i - 1]);
  return s / static_cast<double>(x.size() - 1);
}

double f_cid_ce(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
  return std::sqrt(s);
}

double f_trend_slope(std::span<const double> x) { return trend_slope(x); }
double f_trend_r2(std::span<const double> x) { return trend_r2(x); }

double f_strike_above(std::span<const double> x) {
  return static_cast<double>(longest_strike(x, true)) / static_cast<double>(x.size());
}
double f_strike_below(std::span<const double> x) {
  return static_cast<double>(longest_strike(x, false)) / static_cast<double>(x.size());
}

double f_count_above_mean(std::span<const double> x) {
  double m = feature::mean(x);
  std::size_t c = 0;
  for (double v : x) c += v > m ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(x.size());
}

double f_dominant_frequency(std::span<const double> x) { return dominant_frequency(x); }
double f_dominant_power_share(std::span<const double> x) { return dominant_power_share(x); }
double f_seasonal_strength(std::span<const double> x) { return seasonal_strength(x); }
double f_spectral_entropy(std::span<const double> x) { return spectral_entropy(x); }

double f_diff_variance_ratio(std::span<const double> x) {
  double v = variance(x);
  if (is_flat(x, feature::mean(x), v)) return 0.0;
  auto d = diff(x);
  return variance(d) / v;
}

// Variance of the variances of up to 10 equal blocks, scaled by the squared series variance.
double f_lumpiness(std::span<const double> x) {
  double v = variance(x);
  if (is_flat(x, feature::mean(x), v)) return 0.0;
  std::size_t blocks = std::min<std::size_t>(10, x.size() / 2);
  std::size_t width = x.size() / blocks;
  std::vector<double> block_var;
  for (std::size_t b = 0; b < blocks; ++b) block_var.push_back(variance(x.subspan(b * width, width)));
  return population_variance(block_var) / (v * v);
}

// Longest run inside one of 10 equal-width value bins, as a fraction of the length.
// A constant window is one run of full length.
double f_flat_spots(std::span<const double> x) {
  auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return 1.0;
  auto bin = [&](double v) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * 10.0));
    return std::clamp<long>(b, 0, 9);
  };
  std::size_t best = 1, run = 1;
  for (std::size_t i = 1; i < x.size(); ++i) {
    run = bin(x[i]) == bin(x[i - 1]) ? run + 1 : 1;
    best = std::max(best, run);
  }
  return static_cast<double>(best) / static_cast<double>(x.size());
}

double f_hurst(std::span<const double> x) { return hurst_exponent(x); }

double f_acf1(std::span<const double> x) { return autocorrelation(x, 1); }
double f_acf2(std::span<const double> x) { return autocorrelation(x, 2); }
double f_acf4(std::span<const double> x) { return autocorrelation(x, 4); }
double f_acf8(std::span<const double> x) { return autocorrelation(x, 8); }
double f_acf24(std::span<const double> x) { return autocorrelation(x, 24); }

// Durbin-Levinson second coefficient.
double f_pacf2(std::span<const double> x) {
  double r1 = autocorrelation(x, 1);
  double r2 = autocorrelation(x, 2);
  double den = 1.0 - r1 * r1;
  if (std::fabs(den) < 1e-12) return 0.0;
  return (r2 - r1 * r1) / den;
}

double f_turning_point_rate(std::span<const double> x) { return turning_point_rate(x); }

double f_mean_crossing_rate(std::span<const double> x) {
  double m = feature::mean(x);
  std::size_t c = 0;
  for (std::size_t i = 1; i < x.size(); ++i) c += ((x[i - 1] - m) * (x[i] - m) < 0.0) ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(x.size() - 1);
}

double f_sample_entropy(std::span<const double> x) { return sample_entropy(x); }

FeatureCatalog build_default_catalog() {
  using C = FeatureCategory;
  FeatureCatalog cat;
  cat.version = "native-v1";
  cat.features = {
      {"mean", C::location, "", f_mean},
      {"median", C::location, "", f_median},
      {"quantile_q10", C::location, "q=0.1", f_q10},
      {"quantile_q90", C::location, "q=0.9", f_q90},
      {"std", C::dispersion, "population", f_std},
      {"iqr", C::dispersion, "", f_iqr},
      {"skewness", C::dispersion, "", f_skewness},
      {"kurtosis", C::dispersion, "excess", f_kurtosis},
      {"abs_energy", C::dispersion, "mean of squares", f_abs_energy},
      {"mean_abs_change", C::dispersion, "", f_mean_abs_change},
      {"cid_ce", C::dispersion, "unnormalized", f_cid_ce},
      {"trend_slope", C::trend, "OLS", f_trend_slope},
      {"trend_r2", C::trend, "OLS", f_trend_r2},
      {"longest_strike_above_mean", C::trend, "fraction", f_strike_above},
      {"longest_strike_below_mean", C::trend, "fraction", f_strike_below},
      {"count_above_mean", C::trend, "fraction", f_count_above_mean},
      {"dominant_frequency", C::seasonality, "cycles/step", f_dominant_frequency},
      {"dominant_power_share", C::seasonality, "", f_dominant_power_share},
      {"seasonal_strength", C::seasonality, "period=dominant", f_seasonal_strength},
      {"spectral_entropy", C::seasonality, "normalized", f_spectral_entropy},
      {"diff_variance_ratio", C::stationarity, "", f_diff_variance_ratio},
      {"lumpiness", C::stationarity, "blocks=10", f_lumpiness},
      {"flat_spots", C::stationarity, "bins=10", f_flat_spots},
      {"hurst_rs", C::stationarity, "dyadic scales >= 8", f_hurst},
      {"acf_lag1", C::dependency, "lag=1", f_acf1},
      {"acf_lag2", C::dependency, "lag=2", f_acf2},
      {"acf_lag4", C::dependency, "lag=4", f_acf4},
      {"acf_lag8", C::dependency, "lag=8", f_acf8},
      {"acf_lag24", C::dependency, "lag=24", f_acf24},
      {"pacf_lag2", C::dependency, "lag=2", f_pacf2},
      {"turning_point_rate", C::complexity, "", f_turning_point_rate},
      {"mean_crossing_rate", C::complexity, "", f_mean_crossing_rate},
      {"sample_entropy", C::complexity, "m=2,r=0.2*std", f_sample_entropy},
  };
  return cat;
}

}  // namespace

std::vector<std::string> FeatureCatalog::ids() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.feature_id);
  return out;
}

std::size_t FeatureCatalog::index_of(const std::string& feature_id) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].feature_id == feature_id) return i;
  }
  throw FormatError("unknown feature '" + feature_id + "' in catalog " + version);
}

const FeatureCatalog& default_catalog() {
  static const FeatureCatalog catalog = build_default_catalog();
  return catalog;
}

FeatureVector extract_features(const Window& w, const FeatureCatalog& catalog) {
  if (w.context.size() < kMinContextLength) {
    throw WindowTooShortError("window " + w.window_id + " has context length " +
                              std::to_string(w.context.size()) + " < " +
                              std::to_string(kMinContextLength));
  }
  FeatureVector fv{w.window_id, {}, catalog.version};
  fv.values.reserve(catalog.size());
  std::span<const double> ctx(w.context);
  for (const auto& f : catalog.features) {
    double v = f.fn(ctx);
    fv.values.push_back(std::isfinite(v) ? v : 0.0);
  }
  return fv;
}

FeatureMatrix extract_matrix(const std::vector<Window>& windows, const FeatureCatalog& catalog,
                             std::size_t jobs) {
  FeatureMatrix fm;
  fm.catalog_version = catalog.version;
  fm.feature_ids = catalog.ids();
  fm.values.resize(static_cast<Eigen::Index>(windows.size()),
                   static_cast<Eigen::Index>(catalog.size()));
  fm.window_ids.reserve(windows.size());
  for (const auto& w : windows) fm.window_ids.push_back(w.window_id);
  parallel_for(windows.size(), jobs, [&](std::size_t i) {
    auto fv = extract_features(windows[i], catalog);
    for (std::size_t j = 0; j < fv.values.size(); ++j) {
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fv.values[j];
    }
  });
  return fm;
}

std::string feature_matrix_to_csv(const FeatureMatrix& fm, const std::string& config_hash) {
  std::ostringstream out;
  out << "# catalog=" << fm.catalog_version << "\n";
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "window_id";
  for (const auto& id : fm.feature_ids) out << ',' << id;
  out << '\n';
  for (std::size_t r = 0; r < fm.window_ids.size(); ++r) {
    out << fm.window_ids[r];
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c) {
      out << ',' << format_double(fm.values(static_cast<Eigen::Index>(r), c));
    }
    out << '\n';
  }
  return out.str();
}

FeatureMatrix parse_feature_matrix(std::string_view csv_text, const std::string& origin) {
  auto doc = parse_csv(csv_text, origin);
  if (doc.header.empty() || doc.header.front() != "window_id") {
    throw FormatError(origin + ": feature matrix header must start with window_id");
  }
  auto cat = doc.tags.find("catalog");
  if (cat == doc.tags.end()) throw FormatError(origin + ": missing '# catalog=' line");
  FeatureMatrix fm;
  fm.catalog_version = cat->second;
  fm.feature_ids.assign(doc.header.begin() + 1, doc.header.end());
  fm.values.resize(static_cast<Eigen::Index>(doc.rows.size()),
                   static_cast<Eigen::Index>(fm.feature_ids.size()));
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    fm.window_ids.push_back(trim(doc.rows[r][0]));
    for (std::size_t c = 0; c < fm.feature_ids.size(); ++c) {
      fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(doc.rows[r][c + 1], doc.line_numbers[r]);
    }
  }
  return fm;
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  return parse_feature_matrix(read_file(path), path.string());
}

Standardized standardize(const Matrix& x) {
  if (x.rows() < 1) throw InsufficientDataError("standardize needs at least one row");
  if (!x.allFinite()) throw NumericError("standardize: non-finite input");
  StandardizationStats stats;
  stats.mean = x.colwise().mean().transpose();
  stats.std.resize(x.cols());
  std::vector<bool> constant(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double m = stats.mean(c);
    double var = (x.col(c).array() - m).square().mean();
    constant[c] = var <= 1e-24 * std::max(1.0, m * m);
    stats.std(c) = constant[c] ? 1.0 : std::sqrt(var);
  }
  Standardized out;
  out.values = apply_standardization(x, stats);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (constant[c]) out.values.col(c).setZero();
  }
  out.stats = std::move(stats);
  return out;
}

Matrix apply_standardization(const Matrix& x, const StandardizationStats& stats) {
  if (x.cols() != stats.mean.size()) {
    throw FormatError("apply_standardization: column count mismatch");
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(c) = (x.col(c).array() - stats.mean(c)) / stats.std(c);
  }
  return out;
}

}  // namespace ticbench
