#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ticbench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---- text and CSV helpers ----

std::vector<std::string> split_csv_line(std::string_view line);
std::string trim(std::string_view s);

/// Strict decimal parse; throws ParseError carrying `row` on failure.
double parse_double(std::string_view cell, std::size_t row);
long long parse_int(std::string_view cell, std::size_t row);

/// Shortest text that round-trips the double exactly.
std::string format_double(double v);

/// A CSV file split into `# key=value` comment tags, the header, and data rows.
struct CsvDocument {
  std::map<std::string, std::string> tags;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

CsvDocument read_csv(const std::filesystem::path& path);
CsvDocument parse_csv(std::string_view text, const std::string& origin);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

// ---- provenance ----

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// ---- concurrency ----

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots by the callee; the first exception is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::size_t default_jobs();

// ---- small numerics ----

double mean_of(const std::vector<double>& v);
double population_variance(const std::vector<double>& v);

}  // namespace ticbench
