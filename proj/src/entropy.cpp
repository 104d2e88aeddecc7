#include "ticbench/entropy.hpp"

#include "ticbench/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace ticbench {

namespace {

// Row-major copy so that distance loops walk contiguous memory.
struct PointSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> data;

  explicit PointSet(const Matrix& m)
      : n(static_cast<std::size_t>(m.rows())), d(static_cast<std::size_t>(m.cols())), data(n * d) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) data[i * d + j] = m(i, j);
    }
  }
  const double* row(std::size_t i) const { return data.data() + i * d; }
};

double squared_distance(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

// Keeps the k smallest values seen, sorted ascending.
class SmallestK {
 public:
  explicit SmallestK(int k) : k_(static_cast<std::size_t>(k)) { v_.reserve(k_ + 1); }
  double bound() const {
    return v_.size() < k_ ? std::numeric_limits<double>::infinity() : v_.back();
  }
  void offer(double x) {
    if (x >= bound()) return;
    auto it = std::upper_bound(v_.begin(), v_.end(), x);
    v_.insert(it, x);
    if (v_.size() > k_) v_.pop_back();
  }
  double kth() const { return v_.back(); }

 private:
  std::size_t k_;
  std::vector<double> v_;
};

std::vector<double> brute_force_kth(const PointSet& ps, int k) {
  std::vector<double> out(ps.n);
  for (std::size_t i = 0; i < ps.n; ++i) {
    SmallestK best(k);
    const double* p = ps.row(i);
    for (std::size_t j = 0; j < ps.n; ++j) {
      if (j == i) continue;
      best.offer(squared_distance(p, ps.row(j), ps.d));
    }
    out[i] = std::sqrt(best.kth());
  }
  return out;
}

class KdTree {
 public:
  explicit KdTree(const PointSet& ps) : ps_(ps), index_(ps.n) {
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(2 * ps.n / kLeafSize + 2);
    build(0, ps.n);
  }

  double kth_distance(std::size_t query, int k) const {
    SmallestK best(k);
    search(0, query, best);
    return std::sqrt(best.kth());
  }

 private:
  static constexpr std::size_t kLeafSize = 16;

  struct Node {
    std::size_t begin, end;
    std::size_t dim = 0;
    double split = 0.0;
    long left = -1, right = -1;
    std::vector<double> lo, hi;  // bounding box
  };

  long build(std::size_t begin, std::size_t end) {
    const std::size_t d = ps_.d;
    Node node{begin, end, 0, 0.0, -1, -1, std::vector<double>(d, std::numeric_limits<double>::infinity()),
              std::vector<double>(d, -std::numeric_limits<double>::infinity())};
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = ps_.row(index_[i]);
      for (std::size_t j = 0; j < d; ++j) {
        node.lo[j] = std::min(node.lo[j], p[j]);
        node.hi[j] = std::max(node.hi[j], p[j]);
      }
    }
    long id = static_cast<long>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    std::size_t dim = 0;
    double spread = -1.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (node.hi[j] - node.lo[j] > spread) {
        spread = node.hi[j] - node.lo[j];
        dim = j;
      }
    }
    if (spread <= 0.0) return id;  // all points identical: keep as a leaf
    std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return ps_.row(a)[dim] < ps_.row(b)[dim]; });
    nodes_[id].dim = dim;
    nodes_[id].split = ps_.row(index_[mid])[dim];
    long l = build(begin, mid);
    long r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  double box_distance(const Node& node, const double* q) const {
    double s = 0.0;
    for (std::size_t j = 0; j < ps_.d; ++j) {
      double t = 0.0;
      if (q[j] < node.lo[j]) t = node.lo[j] - q[j];
      else if (q[j] > node.hi[j]) t = q[j] - node.hi[j];
      s += t * t;
    }
    return s;
  }

  void search(long id, std::size_t query, SmallestK& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const double* q = ps_.row(query);
    if (box_distance(node, q) >= best.bound()) return;
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        std::size_t j = index_[i];
        if (j == query) continue;
        best.offer(squared_distance(q, ps_.row(j), ps_.d));
      }
      return;
    }
    bool go_left = q[node.dim] < node.split;
    search(go_left ? node.left : node.right, query, best);
    search(go_left ? node.right : node.left, query, best);
  }

  const PointSet& ps_;
  std::vector<std::size_t> index_;
  std::vector<Node> nodes_;
};

bool use_kd_tree(std::size_t n, std::size_t d, NeighborSearch search) {
  switch (search) {
    case NeighborSearch::brute_force: return false;
    case NeighborSearch::kd_tree: return true;
    case NeighborSearch::automatic: return d <= 8 && n >= 256;
  }
  return false;
}

// Jitters the second and later copies of every exactly repeated row.
// Returns false when the input had no duplicates (and is left untouched).
bool separate_duplicates(Matrix& points, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = points.cols();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (points(a, j) != points(b, j)) return points(a, j) < points(b, j);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<std::size_t> dup;
  for (std::size_t i = 1; i < n; ++i) {
    if ((points.row(order[i]).array() == points.row(order[i - 1]).array()).all()) {
      dup.push_back(order[i]);
    }
  }
  if (dup.empty()) return false;
  std::sort(dup.begin(), dup.end());

  Vector mean = points.colwise().mean().transpose();
  Vector scale(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double sd = std::sqrt((points.col(j).array() - mean(j)).square().mean());
    // A constant column falls back to its magnitude so the jitter survives rounding.
    scale(j) = 1e-10 * ((sd > 0.0 ? sd : std::abs(mean(j))) + 1e-30);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto i : dup) {
    for (Eigen::Index j = 0; j < d; ++j) points(i, j) += u(rng) * scale(j);
  }
  return true;
}

}  // namespace

std::vector<double> kth_neighbor_distances(const Matrix& points, int k, NeighborSearch search) {
  if (k < 1) throw RangeError("k must be positive");
  if (points.rows() <= k) {
    throw InsufficientSamplesError("need more than k=" + std::to_string(k) + " points, got " +
                                   std::to_string(points.rows()));
  }
  PointSet ps(points);
  if (!use_kd_tree(ps.n, ps.d, search)) return brute_force_kth(ps, k);
  KdTree tree(ps);
  std::vector<double> out(ps.n);
  for (std::size_t i = 0; i < ps.n; ++i) out[i] = tree.kth_distance(i, k);
  return out;
}

double digamma_int(std::size_t n) {
  constexpr double euler_gamma = 0.57721566490153286061;
  double s = -euler_gamma;
  for (std::size_t i = 1; i < n; ++i) s += 1.0 / static_cast<double>(i);
  return s;
}

double log_unit_ball_volume(std::size_t d) {
  double h = static_cast<double>(d) / 2.0;
  return h * std::log(M_PI) - std::lgamma(h + 1.0);
}

double kl_entropy(const Matrix& points, int k, std::uint64_t seed, NeighborSearch search) {
  if (k < 1) throw RangeError("k must be positive");
  const auto n = static_cast<std::size_t>(points.rows());
  const auto d = static_cast<std::size_t>(points.cols());
  if (n <= static_cast<std::size_t>(k)) {
    throw InsufficientSamplesError("kl_entropy needs N > k (N=" + std::to_string(n) +
                                   ", k=" + std::to_string(k) + ")");
  }
  if (d == 0) throw RangeError("kl_entropy needs d >= 1");
  if (!points.allFinite()) throw NumericError("kl_entropy: non-finite input");

  std::vector<double> eps;
  Matrix jittered = points;
  if (separate_duplicates(jittered, seed)) {
    eps = kth_neighbor_distances(jittered, k, search);
  } else {
    eps = kth_neighbor_distances(points, k, search);
  }
  double log_sum = 0.0;
  for (double e : eps) log_sum += std::log(e);
  return digamma_int(n) - digamma_int(static_cast<std::size_t>(k)) + log_unit_ball_volume(d) +
         static_cast<double>(d) / static_cast<double>(n) * log_sum;
}

Matrix cap_tokens(const Matrix& layer, std::size_t token_cap, std::uint64_t seed) {
  const auto t = static_cast<std::size_t>(layer.rows());
  if (t <= token_cap) return layer;
  auto keep = subsample_indices(t, token_cap, seed);
  Matrix out(static_cast<Eigen::Index>(keep.size()), layer.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(i) = layer.row(keep[i]);
  return out;
}

std::vector<double> subsample_profile(const std::vector<double>& raw) {
  if (raw.empty()) throw RangeError("subsample_profile needs at least one layer");
  const std::size_t n = raw.size();
  std::vector<double> out(kProfileLength);
  for (std::size_t j = 0; j < kProfileLength; ++j) {
    double pos = static_cast<double>(j) * static_cast<double>(n - 1) /
                 static_cast<double>(kProfileLength - 1);
    if (n >= kProfileLength) {
      out[j] = raw[static_cast<std::size_t>(std::lround(pos))];
    } else {
      auto lo = static_cast<std::size_t>(std::floor(pos));
      auto hi = std::min(lo + 1, n - 1);
      double frac = pos - static_cast<double>(lo);
      out[j] = raw[lo] + frac * (raw[hi] - raw[lo]);
    }
  }
  return out;
}

EntropyProfile entropy_profile(const LayerEmbeddings& emb, std::size_t token_cap, int k,
                               std::uint64_t seed, std::size_t jobs) {
  if (emb.layers.empty()) throw RangeError("entropy_profile: no layers");
  if (token_cap == 0) throw RangeError("token_cap must be positive");
  EntropyProfile prof;
  prof.model_id = emb.model_id;
  prof.scope_id = emb.scope_id;
  prof.estimator_k = k;
  prof.token_cap = token_cap;
  prof.raw.assign(emb.layers.size(), 0.0);
  for (std::size_t l = 0; l < emb.layers.size(); ++l) {
    auto rows = std::min<std::size_t>(static_cast<std::size_t>(emb.layers[l].rows()), token_cap);
    if (rows <= static_cast<std::size_t>(k)) {
      throw InsufficientSamplesError("layer has " + std::to_string(rows) +
                                         " tokens, need more than k=" + std::to_string(k),
                                     static_cast<long>(l));
    }
  }
  parallel_for(emb.layers.size(), jobs, [&](std::size_t l) {
    std::uint64_t layer_seed = seed ^ (0x9E3779B97F4A7C15ULL * (l + 1));
    Matrix tokens = cap_tokens(emb.layers[l], token_cap, layer_seed);
    prof.raw[l] = kl_entropy(tokens, k, layer_seed);
  });
  prof.raw_len = prof.raw.size();
  prof.subsampled = subsample_profile(prof.raw);
  return prof;
}

std::string profile_scope(const std::string& dataset_id, TaskName task) {
  return dataset_id + "/" + to_string(task);
}

std::string profiles_to_csv(const std::vector<EntropyProfile>& profiles,
                            const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "model_id,scope_id,h1,h2,h3,h4,h5,h6,raw_len,k,token_cap\n";
  for (const auto& p : profiles) {
    out << p.model_id << ',' << p.scope_id;
    for (double h : p.subsampled) out << ',' << format_double(h);
    out << ',' << p.raw_len << ',' << p.estimator_k << ',' << p.token_cap << '\n';
  }
  return out.str();
}

std::vector<EntropyProfile> parse_profiles(std::string_view csv_text, const std::string& origin) {
  static const std::vector<std::string> header = {"model_id", "scope_id", "h1", "h2",
                                                  "h3",       "h4",       "h5", "h6",
                                                  "raw_len",  "k",        "token_cap"};
  auto doc = parse_csv(csv_text, origin);
  if (doc.header != header) {
    throw FormatError(origin + ": profile header must be " +
                      "model_id,scope_id,h1,h2,h3,h4,h5,h6,raw_len,k,token_cap");
  }
  std::vector<EntropyProfile> out;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    std::size_t line = doc.line_numbers[r];
    EntropyProfile p;
    p.model_id = trim(row[0]);
    p.scope_id = trim(row[1]);
    for (std::size_t j = 0; j < kProfileLength; ++j) p.subsampled.push_back(parse_double(row[2 + j], line));
    p.raw_len = static_cast<std::size_t>(parse_int(row[8], line));
    p.estimator_k = static_cast<int>(parse_int(row[9], line));
    p.token_cap = static_cast<std::size_t>(parse_int(row[10], line));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<EntropyProfile> load_profiles(const std::filesystem::path& path) {
  return parse_profiles(read_file(path), path.string());
}

}  // namespace ticbench
