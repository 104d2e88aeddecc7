#include "ticbench/tables.hpp"

#include "ticbench/errors.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace ticbench {

std::vector<double> CharacteristicRow::inputs() const {
  std::vector<double> v(data_features);
  v.insert(v.end(), entropy_features.begin(), entropy_features.end());
  v.push_back(zero_shot_mase);
  return v;
}

std::vector<std::string> input_column_names(std::size_t n_data_features) {
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= n_data_features; ++i) names.push_back("f" + std::to_string(i));
  for (std::size_t i = 1; i <= kProfileLength; ++i) names.push_back("h" + std::to_string(i));
  names.push_back("zero_shot");
  return names;
}

namespace {

std::size_t common_width(const std::vector<CharacteristicRow>& rows) {
  std::size_t width = rows.front().data_features.size();
  for (const auto& r : rows) {
    if (r.data_features.size() != width || r.entropy_features.size() != kProfileLength) {
      throw RangeError("row " + r.window_id + " has a different column layout");
    }
  }
  return width;
}

Matrix stack_inputs(const std::vector<CharacteristicRow>& rows, std::size_t n_inputs) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n_inputs));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto v = rows[i].inputs();
    for (std::size_t j = 0; j < n_inputs; ++j) m(i, j) = v[j];
  }
  return m;
}

}  // namespace

ContextTable ContextTable::from_rows(std::vector<CharacteristicRow> rows) {
  if (rows.empty()) throw EmptyContextError("context table has no rows");
  ContextTable t;
  t.n_data_features_ = common_width(rows);
  for (const auto& r : rows) {
    if (!r.finetuned_mase) throw RangeError("context row " + r.window_id + " has no label");
  }
  t.rows_ = std::move(rows);
  return t;
}

Matrix ContextTable::inputs() const { return stack_inputs(rows_, n_inputs()); }

Vector ContextTable::labels() const {
  Vector y(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i) y(i) = *rows_[i].finetuned_mase;
  return y;
}

TargetTable TargetTable::from_rows(std::vector<CharacteristicRow> rows) {
  if (rows.empty()) throw EmptyContextError("target table has no rows");
  TargetTable t;
  t.n_data_features_ = common_width(rows);
  for (auto& r : rows) r.finetuned_mase.reset();
  t.rows_ = std::move(rows);
  return t;
}

Matrix TargetTable::inputs() const { return stack_inputs(rows_, n_inputs()); }

void check_alignment(const ContextTable& ctx, const TargetTable& tgt) {
  if (input_column_names(ctx.n_data_features()) != input_column_names(tgt.n_data_features())) {
    throw FormatError("context has " + std::to_string(ctx.n_inputs()) + " input columns, target has " +
                      std::to_string(tgt.n_inputs()));
  }
}

std::vector<CharacteristicRow> build_rows(const std::vector<FeatureMatrix>& features,
                                          const std::vector<EntropyProfile>& profiles,
                                          const std::vector<PerformanceRecord>& records,
                                          const SelectionResult& selection) {
  struct FeatureRef {
    const FeatureMatrix* fm;
    Eigen::Index row;
  };
  std::unordered_map<std::string, FeatureRef> by_window;
  std::map<const FeatureMatrix*, std::vector<Eigen::Index>> projection;
  for (const auto& fm : features) {
    std::vector<Eigen::Index> cols;
    for (const auto& id : selection.selected_feature_ids) {
      auto it = std::find(fm.feature_ids.begin(), fm.feature_ids.end(), id);
      if (it == fm.feature_ids.end()) {
        throw JoinError("selected feature '" + id + "' missing from a feature matrix");
      }
      cols.push_back(static_cast<Eigen::Index>(it - fm.feature_ids.begin()));
    }
    projection[&fm] = std::move(cols);
    for (std::size_t r = 0; r < fm.window_ids.size(); ++r) {
      by_window.emplace(fm.window_ids[r], FeatureRef{&fm, static_cast<Eigen::Index>(r)});
    }
  }
  std::map<std::pair<std::string, std::string>, const EntropyProfile*> by_scope;
  for (const auto& p : profiles) by_scope[{p.model_id, p.scope_id}] = &p;

  std::vector<CharacteristicRow> rows;
  std::vector<std::string> offenders;
  std::size_t offender_count = 0;
  for (const auto& rec : records) {
    auto f = by_window.find(rec.window_id);
    auto p = by_scope.find({rec.model_id, profile_scope(rec.dataset_id, rec.task)});
    if (f == by_window.end() || p == by_scope.end()) {
      ++offender_count;
      if (offenders.size() < 10) {
        offenders.push_back(rec.model_id + ":" + rec.window_id +
                            (f == by_window.end() ? " (no features)" : " (no profile)"));
      }
      continue;
    }
    CharacteristicRow row;
    row.model_id = rec.model_id;
    row.dataset_id = rec.dataset_id;
    row.task = rec.task;
    row.window_id = rec.window_id;
    for (auto c : projection[f->second.fm]) row.data_features.push_back(f->second.fm->values(f->second.row, c));
    row.entropy_features = p->second->subsampled;
    row.zero_shot_mase = rec.zero_shot_mase;
    row.finetuned_mase = rec.finetuned_mase;
    rows.push_back(std::move(row));
  }
  if (offender_count > 0) {
    std::string msg = std::to_string(offender_count) + " record(s) without a join partner:";
    for (const auto& o : offenders) msg += " " + o;
    throw JoinError(msg);
  }
  std::sort(rows.begin(), rows.end(), [](const CharacteristicRow& a, const CharacteristicRow& b) {
    return std::tie(a.model_id, a.dataset_id, a.window_id) <
           std::tie(b.model_id, b.dataset_id, b.window_id);
  });
  return rows;
}

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::known_model_unseen_data: return "known_model_unseen_data";
    case ScenarioKind::unknown_model_seen_data: return "unknown_model_seen_data";
    case ScenarioKind::unknown_model_unseen_data: return "unknown_model_unseen_data";
  }
  return "known_model_unseen_data";
}

ScenarioKind parse_scenario(std::string_view s) {
  if (s == "i" || s == "known_model_unseen_data") return ScenarioKind::known_model_unseen_data;
  if (s == "ii" || s == "unknown_model_seen_data") return ScenarioKind::unknown_model_seen_data;
  if (s == "iii" || s == "unknown_model_unseen_data") return ScenarioKind::unknown_model_unseen_data;
  throw FormatError("unknown scenario '" + std::string(s) + "'");
}

ContextTable build_scenario_context(const std::vector<CharacteristicRow>& all_rows,
                                    const ScenarioSpec& spec) {
  std::vector<CharacteristicRow> keep;
  for (const auto& r : all_rows) {
    if (r.task != spec.task) continue;
    bool same_model = r.model_id == spec.target_model_id;
    bool same_data = r.dataset_id == spec.target_dataset_id;
    bool admitted = false;
    switch (spec.kind) {
      case ScenarioKind::known_model_unseen_data: admitted = same_model && !same_data; break;
      case ScenarioKind::unknown_model_seen_data: admitted = !same_model && same_data; break;
      case ScenarioKind::unknown_model_unseen_data: admitted = !same_model && !same_data; break;
    }
    if (admitted) keep.push_back(r);
  }
  if (keep.empty()) {
    throw EmptyContextError("scenario " + to_string(spec.kind) + " leaves no context rows for (" +
                            spec.target_model_id + ", " + spec.target_dataset_id + ", " +
                            to_string(spec.task) + ")");
  }
  return ContextTable::from_rows(std::move(keep));
}

TargetTable build_target_table(const std::vector<CharacteristicRow>& all_rows,
                               const std::string& model_id, const std::string& dataset_id,
                               TaskName task, const std::optional<std::set<std::string>>& windows) {
  std::vector<CharacteristicRow> keep;
  for (const auto& r : all_rows) {
    if (r.model_id != model_id || r.dataset_id != dataset_id || r.task != task) continue;
    if (windows && !windows->count(r.window_id)) continue;
    keep.push_back(r);
  }
  if (keep.empty()) {
    throw EmptyContextError("no target rows for (" + model_id + ", " + dataset_id + ", " +
                            to_string(task) + ")");
  }
  return TargetTable::from_rows(std::move(keep));
}

ContextTable truncate_context(const ContextTable& ctx, const TargetTable& tgt, std::size_t max_rows) {
  if (max_rows < 1) throw RangeError("max_rows must be positive");
  if (ctx.size() <= max_rows) return ctx;
  check_alignment(ctx, tgt);
  const auto f = static_cast<Eigen::Index>(ctx.n_data_features());
  const auto n = static_cast<Eigen::Index>(ctx.size());

  Matrix data(n, f);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < f; ++j) data(i, j) = ctx.rows()[i].data_features[j];
  }
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  if (f > 0) {
    auto z = standardize(data);
    Matrix tdata(static_cast<Eigen::Index>(tgt.size()), f);
    for (std::size_t i = 0; i < tgt.size(); ++i) {
      for (Eigen::Index j = 0; j < f; ++j) tdata(i, j) = tgt.rows()[i].data_features[j];
    }
    Eigen::RowVectorXd centroid = apply_standardization(tdata, z.stats).colwise().mean();
    for (Eigen::Index i = 0; i < n; ++i) dist[i] = (z.values.row(i) - centroid).norm();
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  order.resize(max_rows);
  std::sort(order.begin(), order.end());
  std::vector<CharacteristicRow> kept;
  kept.reserve(max_rows);
  for (auto i : order) kept.push_back(ctx.rows()[i]);
  return ContextTable::from_rows(std::move(kept));
}

namespace {
std::vector<std::string> table_header(std::size_t n_data_features) {
  std::vector<std::string> h = {"model_id", "dataset_id", "task", "window_id"};
  auto inputs = input_column_names(n_data_features);
  h.insert(h.end(), inputs.begin(), inputs.end());
  h.push_back("finetuned");
  return h;
}
}  // namespace

std::string rows_to_csv(const std::vector<CharacteristicRow>& rows, std::size_t n_data_features,
                        const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  auto header = table_header(n_data_features);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    if (r.data_features.size() != n_data_features) {
      throw RangeError("row " + r.window_id + " does not match the table width");
    }
    out << r.model_id << ',' << r.dataset_id << ',' << to_string(r.task) << ',' << r.window_id;
    for (double v : r.inputs()) out << ',' << format_double(v);
    out << ',';
    if (r.finetuned_mase) out << format_double(*r.finetuned_mase);
    out << '\n';
  }
  return out.str();
}

std::vector<CharacteristicRow> parse_rows(std::string_view csv_text, const std::string& origin) {
  auto doc = parse_csv(csv_text, origin);
  const std::size_t fixed = 4 + kProfileLength + 2;
  if (doc.header.size() < fixed) throw FormatError(origin + ": table header too short");
  std::size_t n_features = doc.header.size() - fixed;
  if (doc.header != table_header(n_features)) {
    throw FormatError(origin + ": table header must be model_id,dataset_id,task,window_id,f1..fN,"
                               "h1..h6,zero_shot,finetuned");
  }
  if (doc.rows.empty()) throw EmptyContextError(origin + ": table has no rows");
  std::vector<CharacteristicRow> rows;
  rows.reserve(doc.rows.size());
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& cells = doc.rows[r];
    std::size_t line = doc.line_numbers[r];
    CharacteristicRow row;
    row.model_id = trim(cells[0]);
    row.dataset_id = trim(cells[1]);
    try {
      row.task = parse_task_name(trim(cells[2]));
    } catch (const FormatError&) {
      throw ParseError("unknown task '" + trim(cells[2]) + "'", line);
    }
    row.window_id = trim(cells[3]);
    std::size_t c = 4;
    for (std::size_t j = 0; j < n_features; ++j) row.data_features.push_back(parse_double(cells[c++], line));
    for (std::size_t j = 0; j < kProfileLength; ++j) row.entropy_features.push_back(parse_double(cells[c++], line));
    row.zero_shot_mase = parse_double(cells[c++], line);
    std::string label = trim(cells[c]);
    if (!label.empty()) row.finetuned_mase = parse_double(label, line);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CharacteristicRow> load_rows(const std::filesystem::path& path) {
  return parse_rows(read_file(path), path.string());
}

}  // namespace ticbench
