#pragma once

#include "ticbench/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ticbench {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_models = 6;
  std::size_t n_datasets = 5;
  double noise = 0.05;
  std::size_t windows_per_dataset = 300;
  std::size_t series_per_dataset = 4;
  std::size_t series_length = 4096;
  std::size_t hidden_dim = 4;
  std::size_t horizon_tokens = 64;
  /// 0 ties horizon-embedding noise exactly to each model's fine-tuned quality; 1 makes it random.
  double horizon_distortion = 0.85;

  void validate() const;
  std::string to_json() const;
};

/// Per-window difficulty from data features (full default-catalog vector).
double synth_difficulty(const std::vector<double>& catalog_features);

/// Fine-tuning gain from the six-entry entropy profile and data features.
double synth_gain(const std::vector<double>& profile, const std::vector<double>& catalog_features);

/// Noise-free fine-tuned MASE: zero_shot * gain, floored at 0.
double synth_finetuned_oracle(const std::vector<double>& catalog_features, const std::vector<double>& profile,
                              double zero_shot_mase);

/// Deterministic corpus: smooth seasonal series with drifting amplitude, Gaussian layer
/// embeddings with model-specific scale schedules, horizon-aligned embeddings, and
/// performance records labelled by synth_finetuned_oracle plus N(0, noise^2).
Corpus generate_corpus(const SynthConfig& cfg, std::size_t jobs = 1);

}  // namespace ticbench
