// ticbench: command-line driver for every pipeline stage.

#include "ticbench/errors.hpp"
#include "ticbench/pipeline.hpp"
#include "ticbench/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>

namespace fs = std::filesystem;
using namespace ticbench;

namespace {

std::string stage_hash(const std::string& stage, const nlohmann::json& options,
                       const std::vector<fs::path>& inputs) {
  nlohmann::json j = options;
  j["stage"] = stage;
  if (!inputs.empty()) j["inputs_digest"] = digest_of_files(inputs);
  return hex64(fnv1a64(j.dump()));
}

CellKey key_from_path(const fs::path& p, std::string model, std::string dataset, std::optional<TaskName> task) {
  // <root>/<kind>/<model>/<dataset>__<task>.<ext>
  auto stem = p.stem().string();
  auto sep = stem.rfind("__");
  CellKey k;
  k.model_id = model.empty() ? p.parent_path().filename().string() : model;
  k.dataset_id = dataset.empty() ? (sep == std::string::npos ? stem : stem.substr(0, sep)) : dataset;
  if (task) {
    k.task = *task;
  } else if (sep != std::string::npos) {
    k.task = parse_task_name(stem.substr(sep + 2));
  } else {
    throw FormatError("cannot infer the task of " + p.string() + "; pass --task");
  }
  return k;
}

std::optional<std::set<std::string>> window_filter(const std::vector<fs::path>& files) {
  if (files.empty()) return std::nullopt;
  std::set<std::string> ids;
  for (const auto& f : files) {
    auto fm = load_feature_matrix(f);
    ids.insert(fm.window_ids.begin(), fm.window_ids.end());
  }
  return ids;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    atomic_write(out, text);
  }
}

std::vector<std::string> cell_filter_values(const std::vector<CharacteristicRow>& rows, bool models) {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(models ? r.model_id : r.dataset_id);
  return {s.begin(), s.end()};
}

int report_error(const char* kind, const std::string& message, int code) {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-tuning-free transferability estimation for time-series foundation models"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  std::size_t jobs = default_jobs();
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate the synthetic acceptance corpus");
  SynthConfig scfg;
  std::string synth_out;
  synth->add_option("--seed", scfg.seed, "Generator seed");
  synth->add_option("--models", scfg.n_models, "Number of models");
  synth->add_option("--datasets", scfg.n_datasets, "Number of datasets");
  synth->add_option("--noise", scfg.noise, "Label noise standard deviation");
  synth->add_option("--windows", scfg.windows_per_dataset, "Standard-regime windows per dataset and task");
  synth->add_option("--horizon-distortion", scfg.horizon_distortion, "0 aligns horizon embeddings with quality");
  synth->add_option("--out", synth_out, "Corpus directory")->required();

  // ---- extract ----
  auto* extract = app.add_subcommand("extract", "Sample windows and compute the feature catalog");
  std::string ex_dataset, ex_out, ex_task = "short", ex_regime = "standard";
  std::size_t ex_n = 300;
  extract->add_option("--dataset", ex_dataset, "Series CSV")->required()->check(CLI::ExistingFile);
  extract->add_option("--task", ex_task, "short|medium|long");
  extract->add_option("--regime", ex_regime, "standard|fewshot");
  extract->add_option("--n", ex_n, "Standard-regime window count");
  extract->add_option("--seed", seed);
  extract->add_option("--out", ex_out, "Feature CSV");

  // ---- select ----
  auto* select = app.add_subcommand("select", "Greedy TotalVariance feature selection");
  std::vector<std::string> sel_features;
  std::string sel_perf, sel_out;
  double epsilon = 0.001;
  int k_clusters = 100;
  std::size_t max_features = 20, max_samples = 2000;
  select->add_option("--features", sel_features, "Feature CSVs")->required()->check(CLI::ExistingFile);
  select->add_option("--perf", sel_perf, "Performance CSV")->required()->check(CLI::ExistingFile);
  select->add_option("--epsilon", epsilon, "Stop when the best gain falls below this");
  select->add_option("--k-clusters", k_clusters, "Equivalence classes K");
  select->add_option("--max-features", max_features);
  select->add_option("--max-samples", max_samples, "Seeded subsample of (model, window) pairs");
  select->add_option("--seed", seed);
  select->add_option("--out", sel_out, "Selection JSON");

  // ---- profile ----
  auto* profile = app.add_subcommand("profile", "Layer-entropy profiles from TTEB dumps");
  std::vector<std::string> pr_files;
  std::string pr_out, pr_model, pr_dataset, pr_task;
  int pr_k = 3;
  std::size_t pr_cap = kDefaultTokenCap;
  profile->add_option("--embeddings", pr_files, "<model>/<dataset>__<task>.tteb files")->required()->check(CLI::ExistingFile);
  profile->add_option("--model", pr_model, "Override the model id");
  profile->add_option("--dataset", pr_dataset, "Override the dataset id");
  profile->add_option("--task", pr_task, "Override the task");
  profile->add_option("--k", pr_k, "Neighbour order");
  profile->add_option("--token-cap", pr_cap, "Tokens per layer");
  profile->add_option("--seed", seed);
  profile->add_option("--out", pr_out, "Profile CSV");

  // ---- tables ----
  auto* tables = app.add_subcommand("tables", "Join features, profiles and records into characteristic rows");
  std::vector<std::string> tb_features;
  std::string tb_profiles, tb_perf, tb_selection, tb_out;
  tables->add_option("--features", tb_features)->required()->check(CLI::ExistingFile);
  tables->add_option("--profiles", tb_profiles)->required()->check(CLI::ExistingFile);
  tables->add_option("--perf", tb_perf)->required()->check(CLI::ExistingFile);
  tables->add_option("--selection", tb_selection)->required()->check(CLI::ExistingFile);
  tables->add_option("--out", tb_out, "Table CSV");

  // ---- estimate ----
  auto* estimate = app.add_subcommand("estimate", "In-context transferability scores");
  std::string es_table, es_out, es_scenario = "i", es_backend = "reference_kernel", es_endpoint, es_task;
  std::vector<std::string> es_models, es_datasets, es_windows;
  std::size_t es_max_rows = 0;
  double es_bandwidth = 1.0;
  bool es_median = false;
  int es_timeout = 30000;
  estimate->add_option("--table", es_table)->required()->check(CLI::ExistingFile);
  estimate->add_option("--scenario", es_scenario, "i|ii|iii or the full scenario name");
  estimate->add_option("--backend", es_backend, "reference_kernel|remote");
  estimate->add_option("--endpoint", es_endpoint, "Remote service URL")->envname("TICBENCH_ENDPOINT");
  estimate->add_option("--timeout-ms", es_timeout);
  estimate->add_option("--task", es_task, "Restrict to one task");
  estimate->add_option("--model", es_models, "Target models (default: all)");
  estimate->add_option("--dataset", es_datasets, "Target datasets (default: all)");
  estimate->add_option("--target-windows", es_windows, "Feature CSVs whose windows form the target set");
  estimate->add_option("--max-context-rows", es_max_rows, "Truncate the context (0 keeps all)");
  estimate->add_option("--bandwidth-multiplier", es_bandwidth);
  estimate->add_flag("--median", es_median, "Aggregate predictions by median");
  estimate->add_option("--seed", seed);
  estimate->add_option("--out", es_out, "Scores CSV");

  // ---- baseline ----
  auto* baseline = app.add_subcommand("baseline", "Baseline transferability scores");
  std::string bl_method, bl_out, bl_perf, bl_table, bl_scenario = "i", bl_task;
  std::vector<std::string> bl_horizon, bl_windows;
  double bl_lambda = 1e-3;
  baseline->add_option("--method", bl_method, "logme|lfc|regscore|meta|zero_shot")->required();
  baseline->add_option("--horizon", bl_horizon, "TTEH files (<model>/<dataset>__<task>.tteh)")->check(CLI::ExistingFile);
  baseline->add_option("--perf", bl_perf, "Performance CSV (zero_shot)")->check(CLI::ExistingFile);
  baseline->add_option("--table", bl_table, "Table CSV (meta)")->check(CLI::ExistingFile);
  baseline->add_option("--scenario", bl_scenario, "Context scenario for meta");
  baseline->add_option("--ridge-lambda", bl_lambda);
  baseline->add_option("--task", bl_task, "Restrict to one task");
  baseline->add_option("--target-windows", bl_windows, "Feature CSVs whose windows form the target set");
  baseline->add_option("--out", bl_out, "Scores CSV");

  // ---- evaluate ----
  auto* evaluate = app.add_subcommand("evaluate", "Rank correlations against fine-tuned ground truth");
  std::vector<std::string> ev_scores;
  std::string ev_perf, ev_out, ev_regime = "standard";
  bool ev_uniform = false;
  evaluate->add_option("--scores", ev_scores)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--perf", ev_perf)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--regime", ev_regime, "Label stored in the report");
  evaluate->add_flag("--uniform-weights", ev_uniform, "Classic Kendall weights");
  evaluate->add_option("--out", ev_out, "Report JSON");

  // ---- benchmark ----
  auto* bench = app.add_subcommand("benchmark", "Leave-one-dataset-out benchmark over a corpus");
  RunConfig rc;
  std::vector<std::string> bm_tasks, bm_regimes;
  std::string bm_scenario = "i", bm_endpoint, bm_corpus, bm_out, bm_backend;
  bool bm_force = false;
  bench->add_option("--corpus", bm_corpus)->required()->check(CLI::ExistingDirectory);
  bench->add_option("--out", bm_out)->required();
  bench->add_option("--seed", rc.seed);
  bench->add_option("--task", bm_tasks, "short|medium|long (repeatable)");
  bench->add_option("--regime", bm_regimes, "standard|fewshot (repeatable)");
  bench->add_option("--scenario", bm_scenario, "i|ii|iii or the full scenario name");
  bench->add_option("--methods", rc.methods, "Subset of methods");
  bench->add_option("--backend", bm_backend, "Accepted for symmetry; remote rows run when an endpoint is set");
  bench->add_option("--endpoint", bm_endpoint, "Remote service URL")->envname("TICBENCH_ENDPOINT");
  bench->add_option("--epsilon", rc.epsilon);
  bench->add_option("--k-clusters", rc.k_clusters);
  bench->add_option("--max-features", rc.max_features);
  bench->add_option("--max-context-rows", rc.max_context_rows);
  bench->add_option("--bandwidth-multiplier", rc.bandwidth_multiplier);
  bench->add_option("--knn-fallback-k", rc.knn_fallback_k);
  bench->add_option("--meta-lambda", rc.meta_lambda);
  bench->add_option("--windows", rc.windows_per_dataset, "Override the corpus window count");
  bench->add_flag("--force", bm_force, "Overwrite outputs of a different configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("UsageError", e.what(), 2);
  }

  try {
    if (*synth) {
      auto corpus = generate_corpus(scfg, jobs);
      write_corpus(corpus, synth_out);
      std::cerr << "wrote " << corpus.records.size() << " performance records for " << corpus.model_ids.size()
                << " models x " << corpus.datasets.size() << " datasets to " << synth_out << "\n";
    } else if (*extract) {
      auto ds = load_dataset(ex_dataset);
      auto task = parse_task_name(ex_task);
      auto regime = parse_regime(ex_regime);
      auto windows = sample_windows(ds, TaskSpec::preset(task), ex_n, regime, seed);
      auto fm = extract_matrix(windows, default_catalog(), jobs);
      nlohmann::json opts = {{"task", ex_task}, {"regime", ex_regime}, {"n", ex_n}, {"seed", seed}};
      emit(ex_out, feature_matrix_to_csv(fm, stage_hash("extract", opts, {ex_dataset})));
    } else if (*select) {
      std::vector<FeatureMatrix> fms;
      std::vector<fs::path> inputs;
      for (const auto& f : sel_features) {
        fms.push_back(load_feature_matrix(f));
        inputs.emplace_back(f);
      }
      inputs.emplace_back(sel_perf);
      RunConfig cfg;
      cfg.seed = seed;
      cfg.epsilon = epsilon;
      cfg.k_clusters = k_clusters;
      cfg.max_features = max_features;
      cfg.selection_max_samples = max_samples;
      cfg.jobs = jobs;
      auto res = stage_select(fms, load_performance(sel_perf), cfg);
      nlohmann::json opts = {{"epsilon", epsilon}, {"k", k_clusters}, {"max_features", max_features},
                             {"max_samples", max_samples}, {"seed", seed}};
      auto j = nlohmann::json::parse(selection_to_json(res, stage_hash("select", opts, inputs)));
      j["inputs_digest"] = digest_of_files(inputs);
      emit(sel_out, j.dump(2) + "\n");
    } else if (*profile) {
      if (pr_files.size() > 1 && (!pr_model.empty() || !pr_dataset.empty())) {
        throw RangeError("--model/--dataset overrides need a single --embeddings file");
      }
      std::optional<TaskName> task;
      if (!pr_task.empty()) task = parse_task_name(pr_task);
      std::map<CellKey, LayerEmbeddings> embs;
      std::vector<fs::path> inputs;
      for (const auto& f : pr_files) {
        auto key = key_from_path(f, pr_model, pr_dataset, task);
        embs.emplace(key, load_embeddings(f, key.model_id, profile_scope(key.dataset_id, key.task)));
        inputs.emplace_back(f);
      }
      RunConfig cfg;
      cfg.seed = seed;
      cfg.entropy_k = pr_k;
      cfg.token_cap = pr_cap;
      cfg.jobs = jobs;
      std::vector<TaskName> tasks;
      for (const auto& [k, _] : embs) tasks.push_back(k.task);
      cfg.tasks = tasks;
      nlohmann::json opts = {{"k", pr_k}, {"token_cap", pr_cap}, {"seed", seed}};
      emit(pr_out, profiles_to_csv(stage_profile(embs, cfg), stage_hash("profile", opts, inputs)));
    } else if (*tables) {
      std::vector<FeatureMatrix> fms;
      std::vector<fs::path> sources;
      for (const auto& f : tb_features) {
        fms.push_back(load_feature_matrix(f));
        sources.emplace_back(f);
      }
      sources.emplace_back(tb_perf);
      require_newer(tb_selection, sources);
      auto sel_text = read_file(tb_selection);
      auto sel = parse_selection_json(sel_text, tb_selection);
      auto sel_json = nlohmann::json::parse(sel_text);
      if (sel_json.contains("inputs_digest") && sel_json["inputs_digest"].get<std::string>() != digest_of_files(sources)) {
        throw StaleInputError(tb_selection + " was computed from different feature/performance inputs");
      }
      auto rows = build_rows(fms, load_profiles(tb_profiles), load_performance(tb_perf), sel);
      std::vector<fs::path> inputs = sources;
      inputs.emplace_back(tb_profiles);
      inputs.emplace_back(tb_selection);
      emit(tb_out, rows_to_csv(rows, sel.selected_feature_ids.size(), stage_hash("tables", {}, inputs)));
    } else if (*estimate) {
      auto all = load_rows(es_table);
      std::vector<CharacteristicRow> rows;
      for (auto& r : all) {
        if (r.finetuned_mase) rows.push_back(std::move(r));
      }
      RunConfig cfg;
      cfg.seed = seed;
      cfg.scenario = parse_scenario(es_scenario);
      cfg.max_context_rows = es_max_rows;
      cfg.bandwidth_multiplier = es_bandwidth;
      cfg.aggregation = es_median ? Aggregation::median : Aggregation::mean;
      cfg.timeout_ms = es_timeout;
      auto backend = parse_backend(es_backend);
      if (backend == Backend::remote) {
        if (es_endpoint.empty()) throw RangeError("--backend remote needs --endpoint or TICBENCH_ENDPOINT");
        cfg.endpoint = es_endpoint;
      }
      auto windows = window_filter({es_windows.begin(), es_windows.end()});
      auto models = es_models.empty() ? cell_filter_values(rows, true) : es_models;
      auto datasets = es_datasets.empty() ? cell_filter_values(rows, false) : es_datasets;
      std::vector<TaskName> tasks;
      if (!es_task.empty()) {
        tasks.push_back(parse_task_name(es_task));
      } else {
        std::set<TaskName> s;
        for (const auto& r : rows) s.insert(r.task);
        tasks.assign(s.begin(), s.end());
      }
      std::vector<EstimateTarget> targets;
      for (const auto& d : datasets)
        for (auto t : tasks)
          for (const auto& m : models) targets.push_back({m, d, t});
      std::vector<ScoreRecord> scores(targets.size());
      parallel_for(targets.size(), jobs, [&](std::size_t i) {
        scores[i] = estimate_cell(rows, targets[i], cfg, backend, windows,
                                  backend == Backend::remote ? "timetic_remote" : "timetic");
      });
      nlohmann::json opts = nlohmann::json::parse(cfg.to_json());
      opts["backend"] = es_backend;
      std::vector<fs::path> inputs = {es_table};
      for (const auto& w : es_windows) inputs.emplace_back(w);
      emit(es_out, scores_to_csv(scores, stage_hash("estimate", opts, inputs)));
    } else if (*baseline) {
      std::vector<ScoreRecord> scores;
      auto windows = window_filter({bl_windows.begin(), bl_windows.end()});
      std::optional<TaskName> only_task;
      if (!bl_task.empty()) only_task = parse_task_name(bl_task);
      std::vector<fs::path> inputs;
      if (bl_method == "logme" || bl_method == "lfc" || bl_method == "regscore") {
        if (bl_horizon.empty()) throw RangeError("--method " + bl_method + " needs --horizon files");
        WindowMethod wm = bl_method == "logme" ? WindowMethod::logme
                          : bl_method == "lfc" ? WindowMethod::lfc
                                               : WindowMethod::regscore;
        for (const auto& f : bl_horizon) {
          auto key = key_from_path(f, {}, {}, std::nullopt);
          if (only_task && key.task != *only_task) continue;
          scores.push_back(window_baseline_cell(wm, load_pairs(f), {key.model_id, key.dataset_id, key.task}, windows));
          inputs.emplace_back(f);
        }
      } else if (bl_method == "zero_shot") {
        if (bl_perf.empty()) throw RangeError("--method zero_shot needs --perf");
        auto records = load_performance(bl_perf);
        std::set<std::tuple<std::string, std::string, TaskName>> cells;
        for (const auto& r : records) {
          if (!only_task || r.task == *only_task) cells.insert({r.dataset_id, r.model_id, r.task});
        }
        for (const auto& [d, m, t] : cells) scores.push_back(zero_shot_cell(records, {m, d, t}, windows));
        inputs.emplace_back(bl_perf);
      } else if (bl_method == "meta") {
        if (bl_table.empty()) throw RangeError("--method meta needs --table");
        auto rows = load_rows(bl_table);
        RunConfig cfg;
        cfg.scenario = parse_scenario(bl_scenario);
        cfg.meta_lambda = bl_lambda;
        std::set<std::tuple<std::string, TaskName, std::string>> cells;
        for (const auto& r : rows) {
          if (!only_task || r.task == *only_task) cells.insert({r.dataset_id, r.task, r.model_id});
        }
        for (const auto& [d, t, m] : cells) scores.push_back(meta_cell(rows, {m, d, t}, cfg, windows));
        inputs.emplace_back(bl_table);
      } else {
        throw FormatError("unknown baseline method '" + bl_method + "'");
      }
      for (const auto& w : bl_windows) inputs.emplace_back(w);
      nlohmann::json opts = {{"method", bl_method}, {"scenario", bl_scenario}, {"ridge_lambda", bl_lambda}};
      emit(bl_out, scores_to_csv(scores, stage_hash("baseline", opts, inputs)));
    } else if (*evaluate) {
      std::vector<ScoreRecord> scores;
      std::vector<fs::path> inputs;
      for (const auto& f : ev_scores) {
        auto s = load_scores(f);
        scores.insert(scores.end(), s.begin(), s.end());
        inputs.emplace_back(f);
      }
      inputs.emplace_back(ev_perf);
      RankingReport report;
      report.cells = evaluate_ranking(scores, load_performance(ev_perf), ev_regime,
                                      ev_uniform ? KendallWeights::uniform : KendallWeights::hyperbolic);
      for (const auto& c : report.cells) {
        if (c.skipped) std::cerr << "warning: skipped " << c.method << " " << c.dataset_id << "/" << to_string(c.task) << ": " << c.note << "\n";
      }
      nlohmann::json opts = {{"regime", ev_regime}, {"uniform", ev_uniform}};
      emit(ev_out, report_to_json(report, stage_hash("evaluate", opts, inputs)));
    } else if (*bench) {
      rc.corpus_dir = bm_corpus;
      rc.out_dir = bm_out;
      rc.jobs = jobs;
      rc.scenario = parse_scenario(bm_scenario);
      if (!bm_tasks.empty()) {
        rc.tasks.clear();
        for (const auto& t : bm_tasks) rc.tasks.push_back(parse_task_name(t));
      }
      if (!bm_regimes.empty()) {
        rc.regimes.clear();
        for (const auto& r : bm_regimes) rc.regimes.push_back(parse_regime(r));
      }
      if (!bm_backend.empty() && parse_backend(bm_backend) == Backend::remote && bm_endpoint.empty()) {
        throw RangeError("--backend remote needs --endpoint or TICBENCH_ENDPOINT");
      }
      if (!bm_endpoint.empty()) rc.endpoint = bm_endpoint;
      rc.validate();
      auto started = std::chrono::steady_clock::now();
      auto corpus = load_corpus(bm_corpus);
      auto prepared = prepare(corpus, rc);
      auto result = run_benchmark(corpus, prepared, rc);
      write_benchmark_outputs(rc, prepared, result, bm_force);
      for (const auto& n : result.notes) std::cerr << "note: " << n << "\n";
      std::cout << format_report_table(result.report, rc.methods);
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cerr << "benchmark finished in " << secs << " s; outputs in " << bm_out << "\n";
    }
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), e.is_validation() ? 2 : 1);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), 1);
  }
  return 0;
}
