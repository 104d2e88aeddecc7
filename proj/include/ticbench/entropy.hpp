#pragma once

#include "ticbench/common.hpp"
#include "ticbench/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ticbench {

enum class NeighborSearch { automatic, brute_force, kd_tree };

/// Euclidean distance from every row to its k-th nearest other row.
std::vector<double> kth_neighbor_distances(const Matrix& points, int k,
                                           NeighborSearch search = NeighborSearch::automatic);

/// Kozachenko-Leonenko estimate in nats:
///   H = psi(N) - psi(k) + ln V_d + (d/N) * sum_i ln eps_i
/// with eps_i the k-th neighbour distance and V_d the unit-ball volume.
/// Exact duplicate rows are separated by seeded jitter of 1e-10 * (column std + 1e-30)
/// before the neighbour search; duplicate-free input is used as is.
double kl_entropy(const Matrix& points, int k = 3, std::uint64_t seed = 0,
                  NeighborSearch search = NeighborSearch::automatic);

double digamma_int(std::size_t n);
double log_unit_ball_volume(std::size_t d);

inline constexpr std::size_t kProfileLength = 6;
inline constexpr std::size_t kDefaultTokenCap = 10000;

struct EntropyProfile {
  std::string model_id;
  std::string scope_id;
  std::vector<double> raw;         // one entry per layer
  std::vector<double> subsampled;  // always kProfileLength entries
  std::size_t raw_len = 0;
  int estimator_k = 3;
  std::size_t token_cap = kDefaultTokenCap;
};

/// Layer-wise entropies; layers longer than token_cap are reduced to a seeded
/// uniform subsample of exactly token_cap rows first.
EntropyProfile entropy_profile(const LayerEmbeddings& emb, std::size_t token_cap = kDefaultTokenCap,
                               int k = 3, std::uint64_t seed = 0, std::size_t jobs = 1);

/// Token rows that enter the estimator for one layer (exposed for tests).
Matrix cap_tokens(const Matrix& layer, std::size_t token_cap, std::uint64_t seed);

/// N >= 6: entries round(j*(N-1)/5); N < 6: linear interpolation at the same positions.
std::vector<double> subsample_profile(const std::vector<double>& raw);

/// Scope id for the profile of one (dataset, task) block.
std::string profile_scope(const std::string& dataset_id, TaskName task);

std::string profiles_to_csv(const std::vector<EntropyProfile>& profiles,
                            const std::string& config_hash = {});
std::vector<EntropyProfile> parse_profiles(std::string_view csv_text, const std::string& origin);
std::vector<EntropyProfile> load_profiles(const std::filesystem::path& path);

}  // namespace ticbench
