#include "ticbench/pipeline.hpp"

#include "ticbench/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ticbench {

namespace fs = std::filesystem;

namespace {

std::string weights_name(KendallWeights w) { return w == KendallWeights::uniform ? "uniform" : "hyperbolic"; }

KendallWeights parse_weights(const std::string& s) {
  if (s == "uniform") return KendallWeights::uniform;
  if (s == "hyperbolic") return KendallWeights::hyperbolic;
  throw FormatError("unknown kendall weights '" + s + "'");
}

std::string aggregation_name(Aggregation a) { return a == Aggregation::median ? "median" : "mean"; }

}  // namespace

void RunConfig::validate() const {
  if (tasks.empty()) throw RangeError("at least one task is required");
  if (regimes.empty()) throw RangeError("at least one regime is required");
  if (methods.empty()) throw RangeError("at least one method is required");
  for (const auto& m : methods) {
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end()) {
      throw FormatError("unknown method '" + m + "'");
    }
  }
  if (!(epsilon >= 0.0)) throw RangeError("epsilon must be non-negative");
  if (k_clusters < 1) throw RangeError("k_clusters must be positive");
  if (max_features < 1) throw RangeError("max_features must be positive");
  if (selection_max_samples < 2) throw RangeError("selection_max_samples must be at least 2");
  if (entropy_k < 1) throw RangeError("entropy k must be positive");
  if (token_cap < static_cast<std::size_t>(entropy_k) + 1) throw RangeError("token_cap must exceed k");
  if (!(meta_lambda >= 0.0)) throw RangeError("meta_lambda must be non-negative");
  predictor(Backend::reference_kernel).validate();
  if (endpoint) predictor(Backend::remote).validate();
}

std::string RunConfig::to_json() const {
  nlohmann::json j;
  j["corpus_dir"] = corpus_dir.string();
  std::vector<std::string> t, r;
  for (auto x : tasks) t.push_back(to_string(x));
  for (auto x : regimes) r.push_back(to_string(x));
  j["tasks"] = t;
  j["regimes"] = r;
  j["scenario"] = to_string(scenario);
  j["methods"] = methods;
  j["seed"] = seed;
  j["windows_per_dataset"] = windows_per_dataset;
  j["epsilon"] = std::isfinite(epsilon) ? nlohmann::json(epsilon) : nlohmann::json("inf");
  j["k_clusters"] = k_clusters;
  j["max_features"] = max_features;
  j["selection_max_samples"] = selection_max_samples;
  j["entropy_k"] = entropy_k;
  j["token_cap"] = token_cap;
  j["max_context_rows"] = max_context_rows;
  j["bandwidth_multiplier"] = bandwidth_multiplier;
  j["knn_fallback_k"] = knn_fallback_k;
  j["aggregation"] = aggregation_name(aggregation);
  j["endpoint"] = endpoint ? nlohmann::json(*endpoint) : nlohmann::json(nullptr);
  j["timeout_ms"] = timeout_ms;
  j["max_in_flight"] = max_in_flight;
  j["meta_lambda"] = meta_lambda;
  j["kendall_weights"] = weights_name(weights);
  return j.dump();
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json())); }

RunConfig RunConfig::from_json(std::string_view text, const std::string& origin) {
  RunConfig c;
  try {
    auto j = nlohmann::json::parse(text);
    c.corpus_dir = j.at("corpus_dir").get<std::string>();
    c.tasks.clear();
    for (const auto& t : j.at("tasks")) c.tasks.push_back(parse_task_name(t.get<std::string>()));
    c.regimes.clear();
    for (const auto& r : j.at("regimes")) c.regimes.push_back(parse_regime(r.get<std::string>()));
    c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    c.methods = j.at("methods").get<std::vector<std::string>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.windows_per_dataset = j.at("windows_per_dataset").get<std::size_t>();
    const auto& eps = j.at("epsilon");
    c.epsilon = eps.is_string() ? std::numeric_limits<double>::infinity() : eps.get<double>();
    c.k_clusters = j.at("k_clusters").get<int>();
    c.max_features = j.at("max_features").get<std::size_t>();
    c.selection_max_samples = j.at("selection_max_samples").get<std::size_t>();
    c.entropy_k = j.at("entropy_k").get<int>();
    c.token_cap = j.at("token_cap").get<std::size_t>();
    c.max_context_rows = j.at("max_context_rows").get<std::size_t>();
    c.bandwidth_multiplier = j.at("bandwidth_multiplier").get<double>();
    c.knn_fallback_k = j.at("knn_fallback_k").get<std::size_t>();
    c.aggregation = j.at("aggregation").get<std::string>() == "median" ? Aggregation::median : Aggregation::mean;
    if (!j.at("endpoint").is_null()) c.endpoint = j.at("endpoint").get<std::string>();
    c.timeout_ms = j.at("timeout_ms").get<int>();
    c.max_in_flight = j.at("max_in_flight").get<std::size_t>();
    c.meta_lambda = j.at("meta_lambda").get<double>();
    c.weights = parse_weights(j.at("kendall_weights").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  return c;
}

PartitionConfig RunConfig::partition() const {
  PartitionConfig p;
  p.n_clusters = k_clusters;
  p.seed = seed;
  return p;
}

PredictorConfig RunConfig::predictor(Backend backend) const {
  PredictorConfig p;
  p.backend = backend;
  p.bandwidth_multiplier = bandwidth_multiplier;
  p.knn_fallback_k = knn_fallback_k;
  p.timeout_ms = timeout_ms;
  p.max_in_flight = max_in_flight;
  p.seed = seed;
  if (backend == Backend::remote) p.endpoint_url = endpoint;
  return p;
}

std::vector<FeatureMatrix> stage_extract(const Corpus& corpus, const RunConfig& cfg, SamplingRegime regime,
                                         std::map<BlockKey, std::vector<std::string>>* window_ids) {
  const std::size_t n = cfg.windows_per_dataset ? cfg.windows_per_dataset : corpus.windows_per_dataset;
  std::vector<FeatureMatrix> out;
  for (const auto& ds : corpus.datasets) {
    for (auto task : cfg.tasks) {
      auto windows = sample_windows(ds, TaskSpec::preset(task), n, regime, cfg.seed);
      if (window_ids) {
        auto& ids = (*window_ids)[{ds.dataset_id, task}];
        for (const auto& w : windows) ids.push_back(w.window_id);
      }
      out.push_back(extract_matrix(windows, default_catalog(), cfg.jobs));
    }
  }
  return out;
}

SelectionResult stage_select(const std::vector<FeatureMatrix>& features,
                             const std::vector<PerformanceRecord>& records, const RunConfig& cfg) {
  if (features.empty()) throw RangeError("selection needs at least one feature matrix");
  std::map<std::string, std::pair<const FeatureMatrix*, Eigen::Index>> by_window;
  for (const auto& fm : features) {
    if (fm.feature_ids != features.front().feature_ids) throw FormatError("feature matrices use different catalogs");
    for (std::size_t r = 0; r < fm.window_ids.size(); ++r) {
      by_window[fm.window_ids[r]] = {&fm, static_cast<Eigen::Index>(r)};
    }
  }
  std::vector<std::pair<const PerformanceRecord*, std::pair<const FeatureMatrix*, Eigen::Index>>> samples;
  for (const auto& r : records) {
    if (!r.finetuned_mase) continue;
    auto it = by_window.find(r.window_id);
    if (it == by_window.end()) continue;
    samples.push_back({&r, it->second});
  }
  if (samples.size() < 2) throw InsufficientDataError("fewer than two labelled (model, window) samples for selection");
  auto keep = subsample_indices(samples.size(), cfg.selection_max_samples, cfg.seed);
  const auto f = static_cast<Eigen::Index>(features.front().feature_ids.size());
  Matrix x(static_cast<Eigen::Index>(keep.size()), f);
  std::vector<double> y(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto& [rec, loc] = samples[keep[i]];
    x.row(static_cast<Eigen::Index>(i)) = loc.first->values.row(loc.second);
    y[i] = *rec->finetuned_mase;
  }
  auto res = greedy_select(x, features.front().feature_ids, y, cfg.epsilon, cfg.partition(), cfg.max_features,
                           cfg.jobs);
  res.catalog_version = features.front().catalog_version;
  return res;
}

std::vector<EntropyProfile> stage_profile(const std::map<CellKey, LayerEmbeddings>& embeddings, const RunConfig& cfg) {
  std::vector<const std::pair<const CellKey, LayerEmbeddings>*> items;
  for (const auto& kv : embeddings) {
    if (std::find(cfg.tasks.begin(), cfg.tasks.end(), kv.first.task) != cfg.tasks.end()) items.push_back(&kv);
  }
  std::vector<EntropyProfile> out(items.size());
  parallel_for(items.size(), cfg.jobs, [&](std::size_t i) {
    const auto& [key, emb] = *items[i];
    out[i] = entropy_profile(emb, cfg.token_cap, cfg.entropy_k, cfg.seed);
    out[i].model_id = key.model_id;
    out[i].scope_id = profile_scope(key.dataset_id, key.task);
  });
  return out;
}

PreparedCorpus prepare(const Corpus& corpus, const RunConfig& cfg) {
  PreparedCorpus p;
  p.features = stage_extract(corpus, cfg, SamplingRegime::standard, &p.standard_windows);
  for (const auto& [key, ids] : p.standard_windows) {
    auto pick = subsample_indices(ids.size(), kFewShotWindows, cfg.seed);
    auto& set = p.fewshot_windows[key];
    for (auto i : pick) set.insert(ids[i]);
  }
  p.selection = stage_select(p.features, corpus.records, cfg);
  p.profiles = stage_profile(corpus.embeddings, cfg);

  std::vector<PerformanceRecord> used;
  for (const auto& r : corpus.records) {
    if (std::find(cfg.tasks.begin(), cfg.tasks.end(), r.task) == cfg.tasks.end()) continue;
    used.push_back(r);
  }
  p.rows = build_rows(p.features, p.profiles, used, p.selection);
  return p;
}

namespace {

std::vector<CharacteristicRow> labelled_only(const std::vector<CharacteristicRow>& rows) {
  std::vector<CharacteristicRow> out;
  for (const auto& r : rows) {
    if (r.finetuned_mase) out.push_back(r);
  }
  return out;
}

ContextTable scenario_context(const std::vector<CharacteristicRow>& rows, const EstimateTarget& target,
                              const RunConfig& cfg, const TargetTable& tgt) {
  ScenarioSpec spec{cfg.scenario, target.model_id, target.dataset_id, target.task};
  auto ctx = build_scenario_context(rows, spec);
  if (cfg.max_context_rows > 0) ctx = truncate_context(ctx, tgt, cfg.max_context_rows);
  return ctx;
}

}  // namespace

ScoreRecord estimate_cell(const std::vector<CharacteristicRow>& rows, const EstimateTarget& target,
                          const RunConfig& cfg, Backend backend, const std::optional<std::set<std::string>>& windows,
                          const std::string& method) {
  auto tgt = build_target_table(rows, target.model_id, target.dataset_id, target.task, windows);
  auto ctx = scenario_context(rows, target, cfg, tgt);
  auto pred = predict_in_context(ctx, tgt, cfg.predictor(backend));
  return transferability_score(pred, target.model_id, target.dataset_id, target.task, cfg.aggregation, method);
}

ScoreRecord meta_cell(const std::vector<CharacteristicRow>& rows, const EstimateTarget& target, const RunConfig& cfg,
                      const std::optional<std::set<std::string>>& windows) {
  auto tgt = build_target_table(rows, target.model_id, target.dataset_id, target.task, windows);
  auto ctx = scenario_context(rows, target, cfg, tgt);
  auto model = meta_fit(ctx, cfg.meta_lambda);
  return transferability_score(meta_predict(model, tgt), target.model_id, target.dataset_id, target.task,
                               cfg.aggregation, "meta");
}

ScoreRecord zero_shot_cell(const std::vector<PerformanceRecord>& records, const EstimateTarget& target,
                           const std::optional<std::set<std::string>>& windows) {
  std::vector<PerformanceRecord> subset;
  for (const auto& r : records) {
    if (r.model_id != target.model_id || r.dataset_id != target.dataset_id || r.task != target.task) continue;
    if (windows && !windows->count(r.window_id)) continue;
    subset.push_back(r);
  }
  return zero_shot_score(subset);
}

ScoreRecord window_baseline_cell(WindowMethod method, const std::vector<EmbeddingLabelPair>& pairs,
                                 const EstimateTarget& target, const std::optional<std::set<std::string>>& windows) {
  std::vector<EmbeddingLabelPair> subset;
  for (const auto& p : pairs) {
    if (windows && !windows->count(p.window_id)) continue;
    subset.push_back(p);
  }
  return window_baseline_score(method, subset, target.model_id, target.dataset_id, target.task);
}

BenchmarkResult run_benchmark(const Corpus& corpus, const PreparedCorpus& prepared, const RunConfig& cfg) {
  cfg.validate();
  BenchmarkResult result;
  const auto rows = labelled_only(prepared.rows);
  const bool remote_enabled = cfg.endpoint && !cfg.endpoint->empty();

  struct Job {
    SamplingRegime regime;
    std::string method;
    EstimateTarget target;
  };
  std::vector<Job> jobs;
  for (const auto& ds : corpus.datasets) {
    result.target_visits.push_back(ds.dataset_id);
    for (auto regime : cfg.regimes) {
      for (auto task : cfg.tasks) {
        for (const auto& method : cfg.methods) {
          if (method == "timetic_remote" && !remote_enabled) continue;
          for (const auto& model : corpus.model_ids) jobs.push_back({regime, method, {model, ds.dataset_id, task}});
        }
      }
    }
  }

  std::vector<ScoreRecord> scores(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    std::optional<std::set<std::string>> windows;
    if (job.regime == SamplingRegime::fewshot) {
      windows = prepared.fewshot_windows.at({job.target.dataset_id, job.target.task});
    }
    const auto& m = job.method;
    if (m == "timetic") {
      scores[i] = estimate_cell(rows, job.target, cfg, Backend::reference_kernel, windows);
    } else if (m == "timetic_remote") {
      scores[i] = estimate_cell(rows, job.target, cfg, Backend::remote, windows, "timetic_remote");
    } else if (m == "meta") {
      scores[i] = meta_cell(rows, job.target, cfg, windows);
    } else if (m == "zero_shot") {
      scores[i] = zero_shot_cell(corpus.records, job.target, windows);
    } else {
      WindowMethod wm = m == "logme" ? WindowMethod::logme : m == "lfc" ? WindowMethod::lfc : WindowMethod::regscore;
      auto it = corpus.horizon.find({job.target.model_id, job.target.dataset_id, job.target.task});
      if (it == corpus.horizon.end()) {
        throw FormatError("no horizon embeddings for " + job.target.model_id + " on " + job.target.dataset_id + "/" +
                          to_string(job.target.task));
      }
      scores[i] = window_baseline_cell(wm, it->second, job.target, windows);
    }
  });

  for (std::size_t i = 0; i < jobs.size(); ++i) result.scores[to_string(jobs[i].regime)].push_back(scores[i]);

  std::vector<PerformanceRecord> truth;
  for (const auto& r : corpus.records) {
    if (std::find(cfg.tasks.begin(), cfg.tasks.end(), r.task) != cfg.tasks.end()) truth.push_back(r);
  }
  for (auto regime : cfg.regimes) {
    const auto name = to_string(regime);
    auto cells = evaluate_ranking(result.scores[name], truth, name, cfg.weights);
    for (auto& c : cells) {
      if (c.skipped) result.notes.push_back("skipped " + c.method + " " + c.dataset_id + "/" + to_string(c.task) + ": " + c.note);
      result.report.cells.push_back(std::move(c));
    }
    if (!remote_enabled && std::find(cfg.methods.begin(), cfg.methods.end(), "timetic_remote") != cfg.methods.end()) {
      for (const auto& ds : corpus.datasets) {
        for (auto task : cfg.tasks) {
          RankingCell c;
          c.method = "timetic_remote";
          c.regime = name;
          c.dataset_id = ds.dataset_id;
          c.task = task;
          c.skipped = true;
          c.note = "skipped: no remote endpoint configured";
          result.report.cells.push_back(std::move(c));
        }
      }
    }
  }
  if (!remote_enabled) result.notes.push_back("timetic_remote skipped: no remote endpoint configured");
  return result;
}

std::string format_report_table(const RankingReport& report, const std::vector<std::string>& methods) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "method";
  std::vector<std::pair<std::string, TaskName>> cols;
  for (const char* regime : {"standard", "fewshot"}) {
    for (auto t : {TaskName::short_term, TaskName::medium_term, TaskName::long_term}) {
      cols.push_back({regime, t});
      out << std::setw(22) << (std::string(regime) + "/" + to_string(t));
    }
  }
  out << "\n";
  for (const auto& m : methods) {
    out << std::setw(16) << m;
    for (const auto& [regime, t] : cols) {
      auto mean = report.mean(m, regime, t);
      std::ostringstream cell;
      if (mean) {
        cell << std::fixed << std::setprecision(3) << mean->tau_w << " / " << mean->spearman;
      } else {
        cell << "skipped";
      }
      out << std::setw(22) << cell.str();
    }
    out << "\n";
  }
  out << "(cells: mean weighted Kendall tau_w / mean Spearman rho over target datasets)\n";
  return out.str();
}

std::string config_hash_of(const fs::path& artifact) {
  auto text = read_file(artifact);
  const std::string key = "config_hash";
  if (text.rfind("# ", 0) == 0) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line) && line.rfind("#", 0) == 0) {
      auto pos = line.find("config_hash=");
      if (pos != std::string::npos) return trim(line.substr(pos + key.size() + 1));
    }
    return {};
  }
  try {
    auto j = nlohmann::json::parse(text);
    if (j.is_object() && j.contains(key)) return j[key].get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  return {};
}

std::string digest_of_files(const std::vector<fs::path>& paths) {
  std::string acc;
  for (const auto& p : paths) acc += hex64(fnv1a64(read_file(p)));
  return hex64(fnv1a64(acc));
}

void require_newer(const fs::path& derived, const std::vector<fs::path>& sources) {
  if (!fs::exists(derived)) throw FormatError("missing stage output " + derived.string());
  auto t = fs::last_write_time(derived);
  for (const auto& s : sources) {
    if (fs::exists(s) && fs::last_write_time(s) > t) {
      throw StaleInputError(derived.string() + " is older than its input " + s.string());
    }
  }
}

void write_benchmark_outputs(const RunConfig& cfg, const PreparedCorpus& prepared, const BenchmarkResult& result,
                             bool force) {
  const auto hash = cfg.hash();
  const fs::path root = cfg.out_dir;
  auto existing = root / "run_config.json";
  if (fs::exists(existing) && !force) {
    auto previous = config_hash_of(existing);
    if (previous != hash) {
      throw StaleInputError(root.string() + " holds outputs of configuration " + previous + ", not " + hash +
                            " (pass --force to overwrite)");
    }
  }
  auto cfg_json = nlohmann::json::parse(cfg.to_json());
  cfg_json["config_hash"] = hash;
  atomic_write(existing, cfg_json.dump(2) + "\n");
  for (const auto& fm : prepared.features) {
    if (fm.window_ids.empty()) continue;
    auto parts = fm.window_ids.front();
    // dataset/series/start/task
    auto last = parts.rfind('/');
    auto first = parts.find('/');
    std::string name = parts.substr(0, first) + "__" + parts.substr(last + 1);
    atomic_write(root / "features" / (name + ".csv"), feature_matrix_to_csv(fm, hash));
  }
  atomic_write(root / "selection.json", selection_to_json(prepared.selection, hash));
  atomic_write(root / "profiles.csv", profiles_to_csv(prepared.profiles, hash));
  atomic_write(root / "table.csv", rows_to_csv(prepared.rows, prepared.selection.selected_feature_ids.size(), hash));
  for (const auto& [regime, scores] : result.scores) {
    atomic_write(root / ("scores_" + regime + ".csv"), scores_to_csv(scores, hash));
  }
  atomic_write(root / "report.json", report_to_json(result.report, hash));
  atomic_write(root / "report.txt", format_report_table(result.report, cfg.methods));
}

}  // namespace ticbench
