#include "ticbench/synth.hpp"

#include "ticbench/entropy.hpp"
#include "ticbench/errors.hpp"
#include "ticbench/features.hpp"
#include "ticbench/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace ticbench {

void SynthConfig::validate() const {
  if (n_models < 2) throw RangeError("synth needs at least two models");
  if (n_datasets < 2) throw RangeError("synth needs at least two datasets");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw RangeError("noise must be a finite non-negative number");
  if (windows_per_dataset < 1 || series_per_dataset < 1) throw RangeError("window and series counts must be positive");
  if (series_length < TaskSpec::preset(TaskName::long_term).span()) {
    throw RangeError("series_length must fit one long-term window (" +
                     std::to_string(TaskSpec::preset(TaskName::long_term).span()) + ")");
  }
  if (hidden_dim < 1 || horizon_tokens < 2) throw RangeError("hidden_dim >= 1 and horizon_tokens >= 2 required");
  if (!(horizon_distortion >= 0.0 && horizon_distortion <= 1.0)) throw RangeError("horizon_distortion must be in [0, 1]");
}

std::string SynthConfig::to_json() const {
  nlohmann::ordered_json j = {{"seed", seed},
                              {"n_models", n_models},
                              {"n_datasets", n_datasets},
                              {"noise", noise},
                              {"windows_per_dataset", windows_per_dataset},
                              {"series_per_dataset", series_per_dataset},
                              {"series_length", series_length},
                              {"hidden_dim", hidden_dim},
                              {"horizon_tokens", horizon_tokens},
                              {"horizon_distortion", horizon_distortion}};
  return j.dump();
}

namespace {

struct FeatureIndex {
  std::size_t seasonal_strength, spectral_entropy, acf_lag1;
};

const FeatureIndex& feature_index() {
  static const FeatureIndex idx{default_catalog().index_of("seasonal_strength"),
                                default_catalog().index_of("spectral_entropy"),
                                default_catalog().index_of("acf_lag1")};
  return idx;
}

constexpr double kGaussianEntropyOffset = 5.675754;  // (4/2) ln(2 pi e)

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t stream_seed(std::uint64_t seed, const std::string& tag) {
  return fnv1a64(tag) ^ (seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
}

struct ModelParams {
  std::string id;
  double capacity;
  double shape_amp;
  int family;  // 0 rising, 1 falling, 2 hump
  std::size_t n_layers;
  double zero_shot_bias;
  double horizon_u;
};

struct DatasetParams {
  std::string id;
  double entropy_shift;
};

double layer_shape(int family, double u) {
  switch (family) {
    case 0: return u;
    case 1: return -u;
    default: return std::sin(std::numbers::pi * u) - 0.5;
  }
}

SeriesDataset make_dataset(const std::string& id, std::size_t period, const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SeriesDataset ds;
  ds.dataset_id = id;
  ds.frequency_label = "synthetic/period=" + std::to_string(period);
  for (std::size_t s = 0; s < cfg.series_per_dataset; ++s) {
    Series series;
    series.series_id = "s" + std::to_string(s);
    double level = 10.0 * (u01(rng) - 0.5);
    double slope = 0.002 * (u01(rng) - 0.5);
    double amp = 0.3 + 2.5 * u01(rng);
    double drift_period = 600.0 + 1800.0 * u01(rng);
    double drift_phase = 2.0 * std::numbers::pi * u01(rng);
    double phase = 2.0 * std::numbers::pi * u01(rng);
    double phi = 0.2 + 0.7 * u01(rng);
    double sigma = 0.2 + 0.8 * u01(rng);
    double ar = 0.0;
    series.values.reserve(cfg.series_length);
    for (std::size_t t = 0; t < cfg.series_length; ++t) {
      double tt = static_cast<double>(t);
      double a = amp * (1.0 + 0.9 * std::sin(2.0 * std::numbers::pi * tt / drift_period + drift_phase));
      ar = phi * ar + sigma * gauss(rng);
      series.values.push_back(level + slope * tt + a * std::sin(2.0 * std::numbers::pi * tt / period + phase) + ar);
    }
    ds.series.push_back(std::move(series));
  }
  return ds;
}

LayerEmbeddings make_embeddings(const ModelParams& m, const DatasetParams& d, TaskName task, std::size_t dim,
                                std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, "emb/" + m.id + "/" + d.id + "/" + to_string(task)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t tokens = 400 + static_cast<std::size_t>(rng() % 200);
  LayerEmbeddings emb;
  emb.model_id = m.id;
  emb.scope_id = profile_scope(d.id, task);
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    double u = static_cast<double>(l) / static_cast<double>(m.n_layers - 1);
    double sigma = std::exp(m.capacity + m.shape_amp * layer_shape(m.family, u) + d.entropy_shift);
    Matrix layer(static_cast<Eigen::Index>(tokens), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < layer.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.cols(); ++j) {
        layer(i, j) = static_cast<double>(static_cast<float>(sigma * gauss(rng)));
      }
    }
    emb.layers.push_back(std::move(layer));
  }
  return emb;
}

double zero_shot_from_forecast(const Window& w, double target, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> u(w.horizon_actuals.size());
  for (auto& v : u) v = gauss(rng);
  std::vector<double> unit(w.horizon_actuals);
  for (std::size_t t = 0; t < unit.size(); ++t) unit[t] += u[t];
  double scale = target / mase(unit, w.horizon_actuals, w.context);
  std::vector<double> forecast(w.horizon_actuals);
  for (std::size_t t = 0; t < forecast.size(); ++t) forecast[t] += scale * u[t];
  return mase(forecast, w.horizon_actuals, w.context);
}

std::vector<double> patch_means(const std::vector<double>& horizon, std::size_t tokens) {
  std::vector<double> out(tokens, 0.0);
  for (std::size_t p = 0; p < tokens; ++p) {
    std::size_t lo = p * horizon.size() / tokens;
    std::size_t hi = std::max(lo + 1, (p + 1) * horizon.size() / tokens);
    for (std::size_t t = lo; t < hi; ++t) out[p] += horizon[t];
    out[p] /= static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace

double synth_difficulty(const std::vector<double>& f) {
  const auto& ix = feature_index();
  double ss = std::clamp(f.at(ix.seasonal_strength), 0.0, 1.0);
  double se = std::clamp(f.at(ix.spectral_entropy), 0.0, 1.0);
  double acf = std::clamp(std::abs(f.at(ix.acf_lag1)), 0.0, 1.0);
  return 0.4 + 0.6 * (1.0 - ss) + 0.4 * se + 0.2 * (1.0 - acf);
}

double synth_gain(const std::vector<double>& profile, const std::vector<double>& f) {
  if (profile.size() != kProfileLength) throw RangeError("profile must have six entries");
  double kappa = 0.0;
  for (double h : profile) kappa += h;
  kappa /= static_cast<double>(kProfileLength);
  double delta = profile.back() - profile.front();
  double ss = std::clamp(f.at(feature_index().seasonal_strength), 0.0, 1.0);
  return 0.9 - 0.5 * logistic(3.0 * (kappa - kGaussianEntropyOffset)) + 0.1 * std::tanh(0.5 * delta) * (ss - 0.5);
}

double synth_finetuned_oracle(const std::vector<double>& f, const std::vector<double>& profile, double zs) {
  return std::max(0.0, zs * synth_gain(profile, f));
}

Corpus generate_corpus(const SynthConfig& cfg, std::size_t jobs) {
  cfg.validate();
  Corpus corpus;
  corpus.tasks = {TaskName::short_term, TaskName::medium_term, TaskName::long_term};
  corpus.windows_per_dataset = cfg.windows_per_dataset;
  corpus.generator = cfg.to_json();

  std::vector<ModelParams> models;
  {
    std::mt19937_64 rng(stream_seed(cfg.seed, "models"));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < cfg.n_models; ++i) {
      ModelParams m;
      m.id = "m" + std::to_string(i + 1);
      m.capacity = 1.2 * (u01(rng) - 0.5);
      m.shape_amp = 0.1 + 0.2 * u01(rng);
      m.family = static_cast<int>(i % 3);
      m.n_layers = 6 + static_cast<std::size_t>(rng() % 7);
      m.zero_shot_bias = std::exp(0.06 * gauss(rng));
      m.horizon_u = u01(rng);
      models.push_back(m);
      corpus.model_ids.push_back(m.id);
    }
  }

  std::vector<DatasetParams> dparams;
  {
    std::mt19937_64 rng(stream_seed(cfg.seed, "datasets"));
    std::vector<std::size_t> periods = {8, 12, 24, 48, 7, 30, 96, 16};
    std::shuffle(periods.begin(), periods.end(), rng);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < cfg.n_datasets; ++i) {
      DatasetParams d;
      d.id = "ds" + std::to_string(i + 1);
      d.entropy_shift = 0.2 * (u01(rng) - 0.5);
      dparams.push_back(d);
      corpus.datasets.push_back(make_dataset(d.id, periods[i % periods.size()], cfg, rng));
    }
  }

  struct Block {
    std::size_t dataset;
    TaskName task;
    std::vector<Window> windows;
    FeatureMatrix features;
  };
  std::vector<Block> blocks;
  for (std::size_t d = 0; d < dparams.size(); ++d) {
    for (auto task : corpus.tasks) {
      Block b;
      b.dataset = d;
      b.task = task;
      b.windows = sample_windows(corpus.datasets[d], TaskSpec::preset(task), cfg.windows_per_dataset,
                                 SamplingRegime::standard, cfg.seed);
      b.features = extract_matrix(b.windows, default_catalog(), jobs);
      blocks.push_back(std::move(b));
    }
  }

  struct CellOutput {
    LayerEmbeddings emb;
    std::vector<PerformanceRecord> records;
    std::vector<EmbeddingLabelPair> pairs;
    double mean_finetuned = 0.0;
  };
  const std::size_t n_cells = blocks.size() * models.size();
  std::vector<CellOutput> cells(n_cells);
  parallel_for(n_cells, jobs, [&](std::size_t c) {
    const Block& b = blocks[c / models.size()];
    const ModelParams& m = models[c % models.size()];
    const DatasetParams& d = dparams[b.dataset];
    CellOutput& out = cells[c];
    out.emb = make_embeddings(m, d, b.task, cfg.hidden_dim, cfg.seed);
    auto profile = entropy_profile(out.emb, kDefaultTokenCap, 3, cfg.seed).subsampled;

    std::mt19937_64 rng(stream_seed(cfg.seed, "perf/" + m.id + "/" + d.id + "/" + to_string(b.task)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double sum = 0.0;
    for (std::size_t w = 0; w < b.windows.size(); ++w) {
      std::vector<double> f(b.features.values.cols());
      for (std::size_t j = 0; j < f.size(); ++j) f[j] = b.features.values(static_cast<Eigen::Index>(w), j);
      double target = synth_difficulty(f) * m.zero_shot_bias * std::exp(0.1 * gauss(rng));
      double zs = zero_shot_from_forecast(b.windows[w], target, rng);
      double ft = std::max(0.0, synth_finetuned_oracle(f, profile, zs) + cfg.noise * gauss(rng));
      PerformanceRecord r{m.id, d.id, b.task, b.windows[w].window_id, zs, ft};
      out.records.push_back(std::move(r));
      sum += ft;
    }
    out.mean_finetuned = sum / static_cast<double>(b.windows.size());
  });

  // Horizon-embedding noise per cell follows the normalized fine-tuned quality ranking
  // within each (dataset, task), blended with a per-model random level.
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const Block& b = blocks[bi];
    double lo = 1e300, hi = -1e300;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      lo = std::min(lo, cells[bi * models.size() + mi].mean_finetuned);
      hi = std::max(hi, cells[bi * models.size() + mi].mean_finetuned);
    }
    parallel_for(models.size(), jobs, [&](std::size_t mi) {
      const ModelParams& m = models[mi];
      CellOutput& out = cells[bi * models.size() + mi];
      double norm = hi > lo ? (out.mean_finetuned - lo) / (hi - lo) : 0.5;
      double level = 0.2 + 1.5 * ((1.0 - cfg.horizon_distortion) * norm + cfg.horizon_distortion * m.horizon_u);
      std::mt19937_64 rng(stream_seed(cfg.seed, "horizon/" + m.id + "/" + dparams[b.dataset].id + "/" +
                                                    to_string(b.task)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      static const double loadings[] = {1.0, 0.5, -0.8, 0.3, 0.7, -0.4, 0.2, 0.9};
      for (const auto& w : b.windows) {
        EmbeddingLabelPair p;
        p.window_id = w.window_id;
        auto labels = patch_means(w.horizon_actuals, cfg.horizon_tokens);
        double mu = mean_of(labels);
        double sd = std::sqrt(population_variance(labels));
        if (!(sd > 0.0)) sd = 1.0;
        p.features.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(cfg.hidden_dim));
        for (std::size_t t = 0; t < labels.size(); ++t) {
          for (std::size_t j = 0; j < cfg.hidden_dim; ++j) {
            double z = (labels[t] - mu) / sd;
            p.features(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = static_cast<double>(
                static_cast<float>(loadings[j % 8] * z + level * gauss(rng)));
          }
        }
        for (auto& v : labels) v = static_cast<double>(static_cast<float>(v));
        p.labels = std::move(labels);
        out.pairs.push_back(std::move(p));
      }
    });
  }

  for (std::size_t c = 0; c < n_cells; ++c) {
    const Block& b = blocks[c / models.size()];
    CellKey key{models[c % models.size()].id, dparams[b.dataset].id, b.task};
    corpus.embeddings.emplace(key, std::move(cells[c].emb));
    corpus.horizon.emplace(key, std::move(cells[c].pairs));
    for (auto& r : cells[c].records) corpus.records.push_back(std::move(r));
  }
  std::sort(corpus.records.begin(), corpus.records.end(), [](const PerformanceRecord& a, const PerformanceRecord& b) {
    return std::tie(a.model_id, a.dataset_id, a.task, a.window_id) < std::tie(b.model_id, b.dataset_id, b.task, b.window_id);
  });
  return corpus;
}

}  // namespace ticbench
