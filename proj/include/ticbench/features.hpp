#pragma once

#include "ticbench/common.hpp"
#include "ticbench/ingest.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ticbench {

enum class FeatureCategory {
  location,
  dispersion,
  trend,
  seasonality,
  stationarity,
  dependency,
  complexity
};

std::string to_string(FeatureCategory c);

/// Computes one feature on a context segment (length >= 8).
using FeatureFn = double (*)(std::span<const double>);

struct FeatureDef {
  std::string feature_id;
  FeatureCategory category;
  std::string parameters;  // human-readable, e.g. "lag=4"
  FeatureFn fn;
};

struct FeatureCatalog {
  std::string version;
  std::vector<FeatureDef> features;

  std::size_t size() const { return features.size(); }
  std::vector<std::string> ids() const;
  /// Throws FormatError when the id is unknown.
  std::size_t index_of(const std::string& feature_id) const;
};

/// The native 33-feature catalog.
const FeatureCatalog& default_catalog();

inline constexpr std::size_t kMinContextLength = 8;

struct FeatureVector {
  std::string window_id;
  std::vector<double> values;
  std::string catalog_version;
};

/// Features of the context segment only. Degenerate inputs (constant windows)
/// take the documented fallbacks, so the result is always finite.
FeatureVector extract_features(const Window& w, const FeatureCatalog& catalog = default_catalog());

struct FeatureMatrix {
  std::string catalog_version;
  std::vector<std::string> feature_ids;
  std::vector<std::string> window_ids;
  Matrix values;  // rows follow window_ids

  std::size_t rows() const { return window_ids.size(); }
};

FeatureMatrix extract_matrix(const std::vector<Window>& windows,
                             const FeatureCatalog& catalog = default_catalog(),
                             std::size_t jobs = 1);

/// `# catalog=<version>` then `window_id,<feature ids...>`.
std::string feature_matrix_to_csv(const FeatureMatrix& fm, const std::string& config_hash = {});
FeatureMatrix parse_feature_matrix(std::string_view csv_text, const std::string& origin);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

struct StandardizationStats {
  Vector mean;
  Vector std;  // 1 for constant columns
};

struct Standardized {
  Matrix values;
  StandardizationStats stats;
};

/// Population-std z-scores per column; constant columns become 0 with stored std 1.
Standardized standardize(const Matrix& x);
Matrix apply_standardization(const Matrix& x, const StandardizationStats& stats);

// Individual features, exposed for tests and the synthetic generator.
namespace feature {
double mean(std::span<const double> x);
double median(std::span<const double> x);
double std_dev(std::span<const double> x);
double quantile(std::span<const double> x, double q);
double autocorrelation(std::span<const double> x, std::size_t lag);
double trend_slope(std::span<const double> x);
double trend_r2(std::span<const double> x);
double turning_point_rate(std::span<const double> x);
double spectral_entropy(std::span<const double> x);
double dominant_frequency(std::span<const double> x);
double dominant_power_share(std::span<const double> x);
double seasonal_strength(std::span<const double> x);
double sample_entropy(std::span<const double> x);
double hurst_exponent(std::span<const double> x);
/// One-sided periodogram of the demeaned series, bins k = 1..floor(n/2).
std::vector<double> periodogram(std::span<const double> x);
}  // namespace feature

}  // namespace ticbench
