#pragma once

#include "ticbench/common.hpp"
#include "ticbench/entropy.hpp"
#include "ticbench/features.hpp"
#include "ticbench/ingest.hpp"
#include "ticbench/selection.hpp"

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ticbench {

/// Selected data features, the six-entry entropy profile, zero-shot MASE and
/// (for context rows) the fine-tuned MASE label.
struct CharacteristicRow {
  std::string model_id;
  std::string dataset_id;
  TaskName task = TaskName::short_term;
  std::string window_id;
  std::vector<double> data_features;
  std::vector<double> entropy_features;
  double zero_shot_mase = 0.0;
  std::optional<double> finetuned_mase;

  /// [data features..., h1..h6, zero_shot]
  std::vector<double> inputs() const;
};

/// Column names in table order, excluding the identifier columns and the label.
std::vector<std::string> input_column_names(std::size_t n_data_features);

class ContextTable {
 public:
  /// Throws EmptyContextError for no rows and RangeError for unlabeled or ragged rows.
  static ContextTable from_rows(std::vector<CharacteristicRow> rows);

  const std::vector<CharacteristicRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t n_data_features() const { return n_data_features_; }
  std::size_t n_inputs() const { return n_data_features_ + kProfileLength + 1; }
  Matrix inputs() const;
  Vector labels() const;

 private:
  std::vector<CharacteristicRow> rows_;
  std::size_t n_data_features_ = 0;
};

class TargetTable {
 public:
  /// Labels are dropped. Throws EmptyContextError for no rows.
  static TargetTable from_rows(std::vector<CharacteristicRow> rows);

  const std::vector<CharacteristicRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  std::size_t n_data_features() const { return n_data_features_; }
  std::size_t n_inputs() const { return n_data_features_ + kProfileLength + 1; }
  Matrix inputs() const;

 private:
  std::vector<CharacteristicRow> rows_;
  std::size_t n_data_features_ = 0;
};

/// Throws FormatError unless both tables share the same input column layout.
void check_alignment(const ContextTable& ctx, const TargetTable& tgt);

/// Inner join of records with window features and (model, dataset/task) profiles,
/// projected onto the selected features and sorted by (model, dataset, window).
std::vector<CharacteristicRow> build_rows(const std::vector<FeatureMatrix>& features,
                                          const std::vector<EntropyProfile>& profiles,
                                          const std::vector<PerformanceRecord>& records,
                                          const SelectionResult& selection);

enum class ScenarioKind { known_model_unseen_data, unknown_model_seen_data, unknown_model_unseen_data };

std::string to_string(ScenarioKind k);
/// Accepts the full names and the aliases i, ii, iii.
ScenarioKind parse_scenario(std::string_view s);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::known_model_unseen_data;
  std::string target_model_id;
  std::string target_dataset_id;
  TaskName task = TaskName::short_term;
};

/// Rows of spec.task that the scenario admits as context; target-cell rows never appear.
ContextTable build_scenario_context(const std::vector<CharacteristicRow>& all_rows,
                                    const ScenarioSpec& spec);

/// Rows of the target (model, dataset, task) cell, optionally restricted to a window set.
TargetTable build_target_table(const std::vector<CharacteristicRow>& all_rows,
                               const std::string& model_id, const std::string& dataset_id,
                               TaskName task,
                               const std::optional<std::set<std::string>>& windows = std::nullopt);

/// Keeps the max_rows context rows nearest (standardized data features) to the
/// target table's mean feature vector; ties resolved by row order.
ContextTable truncate_context(const ContextTable& ctx, const TargetTable& tgt, std::size_t max_rows);

std::string rows_to_csv(const std::vector<CharacteristicRow>& rows, std::size_t n_data_features,
                        const std::string& config_hash = {});
/// Throws FormatError on a header mismatch and EmptyContextError when there are no rows.
std::vector<CharacteristicRow> parse_rows(std::string_view csv_text, const std::string& origin);
std::vector<CharacteristicRow> load_rows(const std::filesystem::path& path);

}  // namespace ticbench
