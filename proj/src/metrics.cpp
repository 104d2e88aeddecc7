#include "ticbench/metrics.hpp"

#include "ticbench/common.hpp"
#include "ticbench/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace ticbench {

double mase(const std::vector<double>& forecast, const std::vector<double>& actual,
            const std::vector<double>& insample, std::size_t m) {
  if (forecast.empty() || forecast.size() != actual.size()) {
    throw RangeError("forecast and actual must be non-empty and of equal length");
  }
  if (m < 1 || insample.size() < m + 1) throw RangeError("in-sample series must be longer than m");
  double num = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) num += std::abs(actual[t] - forecast[t]);
  num /= static_cast<double>(actual.size());
  double den = 0.0;
  for (std::size_t t = m; t < insample.size(); ++t) den += std::abs(insample[t] - insample[t - m]);
  den /= static_cast<double>(insample.size() - m);
  if (!(den > 0.0)) throw DegenerateScaleError("in-sample seasonal-naive error is zero");
  return num / den;
}

std::vector<double> average_ranks(const std::vector<double>& v, bool descending) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? v[a] > v[b] : v[a] < v[b];
  });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw RangeError("spearman inputs differ in length");
  if (a.size() < 2) throw RangeError("spearman needs at least two entries");
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  double ma = mean_of(ra), mb = mean_of(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> weighted_kendall(const std::vector<double>& scores, const std::vector<double>& truth,
                                       KendallWeights weights) {
  if (scores.size() != truth.size()) throw RangeError("weighted_kendall inputs differ in length");
  if (scores.size() < 2) throw RangeError("weighted_kendall needs at least two entries");
  auto r = average_ranks(truth, /*descending=*/true);
  double total = 0.0, discordant = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = i + 1; j < scores.size(); ++j) {
      double ds = scores[i] - scores[j];
      double dt = truth[i] - truth[j];
      if (ds == 0.0 || dt == 0.0) continue;
      double w = weights == KendallWeights::uniform ? 1.0 : 1.0 / (r[i] + 1.0) + 1.0 / (r[j] + 1.0);
      total += w;
      if ((ds > 0.0) != (dt > 0.0)) discordant += w;
    }
  }
  if (total == 0.0) return std::nullopt;
  return 1.0 - 2.0 * discordant / total;
}

std::string scores_to_csv(const std::vector<ScoreRecord>& scores, const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << "\n";
  out << "method,model_id,dataset_id,task,score\n";
  for (const auto& s : scores) {
    out << s.method << ',' << s.model_id << ',' << s.dataset_id << ',' << to_string(s.task) << ','
        << format_double(s.score) << '\n';
  }
  return out.str();
}

std::vector<ScoreRecord> parse_scores(std::string_view csv_text, const std::string& origin) {
  auto doc = parse_csv(csv_text, origin);
  const std::vector<std::string> expected = {"method", "model_id", "dataset_id", "task", "score"};
  if (doc.header != expected) throw FormatError(origin + ": header must be method,model_id,dataset_id,task,score");
  std::vector<ScoreRecord> out;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& c = doc.rows[r];
    ScoreRecord s;
    s.method = trim(c[0]);
    s.model_id = trim(c[1]);
    s.dataset_id = trim(c[2]);
    try {
      s.task = parse_task_name(trim(c[3]));
    } catch (const FormatError&) {
      throw ParseError("unknown task '" + trim(c[3]) + "'", doc.line_numbers[r]);
    }
    s.score = parse_double(c[4], doc.line_numbers[r]);
    s.raw_mean_prediction = -s.score;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
  return parse_scores(read_file(path), path.string());
}

std::optional<RankingMean> RankingReport::mean(const std::string& method, const std::string& regime,
                                               std::optional<TaskName> task) const {
  RankingMean m;
  for (const auto& c : cells) {
    if (c.method != method || c.regime != regime || c.skipped) continue;
    if (task && c.task != *task) continue;
    if (!c.tau_w || !c.spearman) continue;
    m.tau_w += *c.tau_w;
    m.spearman += *c.spearman;
    ++m.n_cells;
  }
  if (m.n_cells == 0) return std::nullopt;
  m.tau_w /= static_cast<double>(m.n_cells);
  m.spearman /= static_cast<double>(m.n_cells);
  return m;
}

std::vector<RankingCell> evaluate_ranking(const std::vector<ScoreRecord>& scores,
                                          const std::vector<PerformanceRecord>& truth,
                                          const std::string& regime, KendallWeights weights) {
  using CellKey = std::tuple<std::string, std::string, TaskName>;  // method, dataset, task
  std::map<std::tuple<std::string, std::string, TaskName>, std::pair<double, std::size_t>> truth_sum;
  for (const auto& r : truth) {
    if (!r.finetuned_mase) continue;
    auto& acc = truth_sum[{r.model_id, r.dataset_id, r.task}];
    acc.first += *r.finetuned_mase;
    ++acc.second;
  }
  std::map<CellKey, std::vector<const ScoreRecord*>> cells;
  for (const auto& s : scores) cells[{s.method, s.dataset_id, s.task}].push_back(&s);

  std::vector<RankingCell> out;
  for (const auto& [key, members] : cells) {
    RankingCell cell;
    cell.method = std::get<0>(key);
    cell.regime = regime;
    cell.dataset_id = std::get<1>(key);
    cell.task = std::get<2>(key);
    std::vector<double> est, good;
    std::set<std::string> seen;
    for (const auto* s : members) {
      if (!seen.insert(s->model_id).second) {
        throw DuplicateRecordError("duplicate score for " + s->method + "/" + s->model_id + "/" +
                                   s->dataset_id + "/" + to_string(s->task));
      }
      auto t = truth_sum.find({s->model_id, s->dataset_id, s->task});
      if (t == truth_sum.end()) {
        throw JoinError("no fine-tuned ground truth for " + s->model_id + " on " + s->dataset_id + "/" +
                        to_string(s->task));
      }
      est.push_back(s->score);
      good.push_back(-t->second.first / static_cast<double>(t->second.second));
    }
    cell.n_models = est.size();
    if (cell.n_models < 2) {
      cell.skipped = true;
      cell.note = "fewer than two models";
    } else {
      cell.tau_w = weighted_kendall(est, good, weights);
      cell.spearman = spearman(est, good);
      if (!cell.tau_w || !cell.spearman) cell.note = "undefined correlation (ties)";
    }
    out.push_back(std::move(cell));
  }
  return out;
}

namespace {
nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace

std::string report_to_json(const RankingReport& report, const std::string& config_hash) {
  nlohmann::json j;
  j["cells"] = nlohmann::json::array();
  std::set<std::tuple<std::string, std::string>> groups;
  for (const auto& c : report.cells) {
    nlohmann::json cell = {{"dataset", c.dataset_id},
                           {"task", to_string(c.task)},
                           {"method", c.method},
                           {"regime", c.regime},
                           {"n_models", c.n_models},
                           {"tau_w", optional_number(c.tau_w)},
                           {"spearman", optional_number(c.spearman)}};
    if (c.skipped) cell["skipped"] = true;
    if (!c.note.empty()) cell["note"] = c.note;
    j["cells"].push_back(std::move(cell));
    groups.insert({c.method, c.regime});
  }
  nlohmann::json means = nlohmann::json::object();
  for (const auto& [method, regime] : groups) {
    for (TaskName t : {TaskName::short_term, TaskName::medium_term, TaskName::long_term}) {
      auto m = report.mean(method, regime, t);
      if (!m) continue;
      means[method][regime][to_string(t)] = {{"tau_w", m->tau_w}, {"spearman", m->spearman}, {"n_cells", m->n_cells}};
    }
  }
  j["means"] = std::move(means);
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

RankingReport parse_report_json(std::string_view text, const std::string& origin) {
  RankingReport report;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& c : j.at("cells")) {
      RankingCell cell;
      cell.dataset_id = c.at("dataset").get<std::string>();
      cell.task = parse_task_name(c.at("task").get<std::string>());
      cell.method = c.at("method").get<std::string>();
      cell.regime = c.value("regime", std::string("standard"));
      cell.n_models = c.value("n_models", std::size_t{0});
      if (!c.at("tau_w").is_null()) cell.tau_w = c.at("tau_w").get<double>();
      if (!c.at("spearman").is_null()) cell.spearman = c.at("spearman").get<double>();
      cell.skipped = c.value("skipped", false);
      cell.note = c.value("note", std::string{});
      report.cells.push_back(std::move(cell));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  return report;
}

}  // namespace ticbench
