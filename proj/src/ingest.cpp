#include "ticbench/ingest.hpp"

#include "ticbench/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace ticbench {

std::size_t SeriesDataset::total_points() const {
  std::size_t n = 0;
  for (const auto& s : series) n += s.values.size();
  return n;
}

std::string to_string(TaskName t) {
  switch (t) {
    case TaskName::short_term: return "short";
    case TaskName::medium_term: return "medium";
    case TaskName::long_term: return "long";
  }
  return "short";
}

TaskName parse_task_name(std::string_view s) {
  if (s == "short") return TaskName::short_term;
  if (s == "medium") return TaskName::medium_term;
  if (s == "long") return TaskName::long_term;
  throw FormatError("unknown task '" + std::string(s) + "' (expected short, medium or long)");
}

TaskSpec TaskSpec::preset(TaskName name) {
  switch (name) {
    case TaskName::short_term: return {name, 256, 64};
    case TaskName::medium_term: return {name, 1024, 256};
    case TaskName::long_term: return {name, 2048, 512};
  }
  return {};
}

std::string to_string(SamplingRegime r) {
  return r == SamplingRegime::standard ? "standard" : "fewshot";
}

SamplingRegime parse_regime(std::string_view s) {
  if (s == "standard") return SamplingRegime::standard;
  if (s == "fewshot") return SamplingRegime::fewshot;
  throw FormatError("unknown regime '" + std::string(s) + "' (expected standard or fewshot)");
}

std::string make_window_id(const std::string& dataset_id, const std::string& series_id,
                           std::size_t start, TaskName task) {
  return dataset_id + "/" + series_id + "/" + std::to_string(start) + "/" + to_string(task);
}

// ---------------------------------------------------------------------------
// Time-series CSV

SeriesDataset parse_dataset(std::string_view csv_text, const std::string& dataset_id) {
  auto doc = parse_csv(csv_text, dataset_id);
  auto col = [&](const std::string& name) -> long {
    auto it = std::find(doc.header.begin(), doc.header.end(), name);
    return it == doc.header.end() ? -1 : static_cast<long>(it - doc.header.begin());
  };
  long id_col = col("series_id");
  long ts_col = col("timestamp");
  long value_col = col("value");
  if (id_col < 0 || value_col < 0) {
    throw FormatError(dataset_id + ": header must be series_id[,timestamp],value");
  }

  SeriesDataset ds;
  ds.dataset_id = dataset_id;
  if (auto it = doc.tags.find("frequency"); it != doc.tags.end()) ds.frequency_label = it->second;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    std::size_t line = doc.line_numbers[r];
    std::string sid = trim(row[id_col]);
    if (sid.empty()) throw ParseError("empty series_id", line);
    std::string cell = trim(row[value_col]);
    double v = parse_double(cell, line);
    if (std::isnan(v)) throw ParseError("missing value (NaN)", line);
    if (!std::isfinite(v)) throw ParseError("non-finite value", line);
    auto [it, inserted] = index.try_emplace(sid, ds.series.size());
    if (inserted) ds.series.push_back(Series{sid, {}, {}});
    auto& s = ds.series[it->second];
    s.values.push_back(v);
    if (ts_col >= 0) s.timestamps.push_back(trim(row[ts_col]));
  }
  return ds;
}

SeriesDataset load_dataset(const std::filesystem::path& path,
                           std::optional<std::string> dataset_id) {
  return parse_dataset(read_file(path), dataset_id.value_or(path.stem().string()));
}

std::string dataset_to_csv(const SeriesDataset& ds) {
  std::ostringstream out;
  if (!ds.frequency_label.empty()) out << "# frequency=" << ds.frequency_label << "\n";
  bool with_ts = !ds.series.empty() && !ds.series.front().timestamps.empty();
  out << (with_ts ? "series_id,timestamp,value\n" : "series_id,value\n");
  for (const auto& s : ds.series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.series_id << ',';
      if (with_ts) out << s.timestamps.at(i) << ',';
      out << format_double(s.values[i]) << '\n';
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Window sampling

std::vector<std::size_t> subsample_indices(std::size_t candidates, std::size_t count,
                                           std::uint64_t seed) {
  std::vector<std::size_t> idx(candidates);
  for (std::size_t i = 0; i < candidates; ++i) idx[i] = i;
  count = std::min(count, candidates);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<Window> sample_windows(const SeriesDataset& ds, const TaskSpec& task, std::size_t n,
                                   SamplingRegime regime, std::uint64_t seed) {
  if (task.context_len == 0 || task.horizon == 0) throw RangeError("task lengths must be positive");
  const std::size_t span = task.span();

  struct Eligible {
    const Series* series;
    std::size_t capacity;  // number of valid start positions
    std::size_t quota = 0;
  };
  std::vector<Eligible> eligible;
  for (const auto& s : ds.series) {
    if (s.values.size() >= span) eligible.push_back({&s, s.values.size() - span + 1});
  }
  if (eligible.empty()) {
    throw EmptySampleError(ds.dataset_id + ": no series of length >= " + std::to_string(span) +
                           " for task " + to_string(task.name));
  }

  // Round-robin quota allocation, capped by each series' valid start count.
  std::size_t assigned = 0;
  bool progress = true;
  while (assigned < n && progress) {
    progress = false;
    for (auto& e : eligible) {
      if (assigned == n) break;
      if (e.quota < e.capacity) {
        ++e.quota;
        ++assigned;
        progress = true;
      }
    }
  }

  std::vector<std::vector<std::size_t>> starts(eligible.size());
  std::size_t max_quota = 0;
  for (std::size_t s = 0; s < eligible.size(); ++s) {
    const auto& e = eligible[s];
    max_quota = std::max(max_quota, e.quota);
    if (e.quota == 1) {
      starts[s] = {0};
    } else if (e.quota > 1) {
      std::size_t max_start = e.capacity - 1;
      std::size_t stride = max_start / (e.quota - 1);
      for (std::size_t j = 0; j < e.quota; ++j) starts[s].push_back(j * stride);
    }
  }

  std::vector<Window> out;
  out.reserve(assigned);
  for (std::size_t round = 0; round < max_quota; ++round) {
    for (std::size_t s = 0; s < eligible.size(); ++s) {
      if (round >= starts[s].size()) continue;
      const Series& src = *eligible[s].series;
      std::size_t st = starts[s][round];
      Window w;
      w.series_id = src.series_id;
      w.start = st;
      w.window_id = make_window_id(ds.dataset_id, src.series_id, st, task.name);
      w.context.assign(src.values.begin() + st, src.values.begin() + st + task.context_len);
      w.horizon_actuals.assign(src.values.begin() + st + task.context_len,
                               src.values.begin() + st + span);
      out.push_back(std::move(w));
    }
  }

  if (regime == SamplingRegime::fewshot) {
    auto keep = subsample_indices(out.size(), kFewShotWindows, seed);
    std::vector<Window> chosen;
    chosen.reserve(keep.size());
    for (auto i : keep) chosen.push_back(std::move(out[i]));
    return chosen;
  }
  return out;
}

// ---------------------------------------------------------------------------
// TTEB

namespace {

constexpr char kTtebMagic[4] = {'T', 'T', 'E', 'B'};
constexpr std::uint32_t kTtebVersion = 1;

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("TTEB truncated while reading ") + what + " at byte offset " +
                        std::to_string(pos_) + " (file has " + std::to_string(bytes_.size()) +
                        " bytes)");
    }
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::string_view bytes() const { return bytes_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

}  // namespace

LayerEmbeddings parse_embeddings(std::string_view bytes, std::string model_id,
                                 std::string scope_id) {
  if (bytes.size() < 4 || !std::equal(kTtebMagic, kTtebMagic + 4, bytes.begin())) {
    throw FormatError("bad TTEB magic");
  }
  ByteReader in(bytes);
  in.skip(4);
  auto version = in.u32("version");
  if (version != kTtebVersion) {
    throw FormatError("unsupported TTEB version " + std::to_string(version));
  }
  auto n_layers = in.u32("layer count");
  if (n_layers == 0) throw FormatError("TTEB file declares zero layers");

  LayerEmbeddings emb{std::move(model_id), std::move(scope_id), {}};
  emb.layers.reserve(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    auto rows = in.u32("layer shape");
    auto cols = in.u32("layer shape");
    if (rows < 2 || cols < 1) {
      throw FormatError("layer " + std::to_string(l) + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " (need T >= 2, d >= 1)");
    }
    std::size_t payload = static_cast<std::size_t>(rows) * cols * 4;
    in.need(payload, "layer payload");
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        float v = in.f32("value");
        if (!std::isfinite(v)) {
          throw FormatError("non-finite value in layer " + std::to_string(l) + " at byte offset " +
                            std::to_string(in.pos() - 4));
        }
        m(r, c) = v;
      }
    }
    emb.layers.push_back(std::move(m));
  }
  if (in.remaining() != 0) {
    throw FormatError("TTEB has " + std::to_string(in.remaining()) +
                      " trailing bytes at byte offset " + std::to_string(in.pos()));
  }
  return emb;
}

LayerEmbeddings load_embeddings(const std::filesystem::path& path, std::string model_id,
                                std::string scope_id) {
  if (model_id.empty()) model_id = path.stem().string();
  if (scope_id.empty()) scope_id = path.stem().string();
  return parse_embeddings(read_file(path), std::move(model_id), std::move(scope_id));
}

std::string embeddings_to_bytes(const LayerEmbeddings& emb) {
  std::string out(kTtebMagic, 4);
  put_u32(out, kTtebVersion);
  put_u32(out, static_cast<std::uint32_t>(emb.layers.size()));
  for (const auto& layer : emb.layers) {
    put_u32(out, static_cast<std::uint32_t>(layer.rows()));
    put_u32(out, static_cast<std::uint32_t>(layer.cols()));
    for (Eigen::Index r = 0; r < layer.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.cols(); ++c) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(layer(r, c))));
      }
    }
  }
  return out;
}

void write_embeddings(const std::filesystem::path& path, const LayerEmbeddings& emb) {
  atomic_write(path, embeddings_to_bytes(emb));
}

// ---------------------------------------------------------------------------
// Performance CSV

namespace {
const std::vector<std::string> kPerfHeader = {"model_id",  "dataset_id",     "task",
                                              "window_id", "zero_shot_mase", "finetuned_mase"};
}

std::vector<PerformanceRecord> parse_performance(std::string_view csv_text,
                                                 const std::string& origin) {
  auto doc = parse_csv(csv_text, origin);
  if (doc.header != kPerfHeader) {
    throw FormatError(origin +
                      ": header must be model_id,dataset_id,task,window_id,zero_shot_mase,"
                      "finetuned_mase");
  }
  std::vector<PerformanceRecord> out;
  out.reserve(doc.rows.size());
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& row = doc.rows[r];
    std::size_t line = doc.line_numbers[r];
    PerformanceRecord rec;
    rec.model_id = trim(row[0]);
    rec.dataset_id = trim(row[1]);
    std::string task = trim(row[2]);
    try {
      rec.task = parse_task_name(task);
    } catch (const FormatError&) {
      throw ParseError("unknown task '" + task + "'", line);
    }
    rec.window_id = trim(row[3]);
    rec.zero_shot_mase = parse_double(row[4], line);
    std::string ft = trim(row[5]);
    if (!ft.empty()) rec.finetuned_mase = parse_double(ft, line);
    if (!std::isfinite(rec.zero_shot_mase) ||
        (rec.finetuned_mase && !std::isfinite(*rec.finetuned_mase))) {
      throw RangeError(origin + ": non-finite MASE at row " + std::to_string(line));
    }
    if (rec.zero_shot_mase < 0.0 || (rec.finetuned_mase && *rec.finetuned_mase < 0.0)) {
      throw RangeError(origin + ": negative MASE at row " + std::to_string(line));
    }
    if (!seen.emplace(rec.model_id, rec.dataset_id, task, rec.window_id).second) {
      throw DuplicateRecordError(origin + ": duplicate record (" + rec.model_id + ", " +
                                 rec.dataset_id + ", " + task + ", " + rec.window_id +
                                 ") at row " + std::to_string(line));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<PerformanceRecord> load_performance(const std::filesystem::path& path) {
  return parse_performance(read_file(path), path.string());
}

std::string performance_to_csv(const std::vector<PerformanceRecord>& records) {
  std::ostringstream out;
  out << "model_id,dataset_id,task,window_id,zero_shot_mase,finetuned_mase\n";
  for (const auto& r : records) {
    out << r.model_id << ',' << r.dataset_id << ',' << to_string(r.task) << ',' << r.window_id
        << ',' << format_double(r.zero_shot_mase) << ',';
    if (r.finetuned_mase) out << format_double(*r.finetuned_mase);
    out << '\n';
  }
  return out.str();
}

}  // namespace ticbench
