#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "survbench/harness.hpp"

namespace survbench {

struct PreprocessOptions {
  std::string time_col = "time";
  std::string event_col = "event";
  std::string na_string = "NA";
  double missing_threshold = 0.5;
  int knn_k = 5;
};

struct RunConfig {
  std::optional<std::string> input;
  std::optional<SynthSpec> synth;
  PreprocessOptions preprocess;
  SelectionOptions selection;
  std::vector<ModelSetup> models;
  int reps = 10;
  HarnessOptions harness;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  std::string out_dir = ".";

  /// Throws invalid_config when neither or both data sources are set, or
  /// when a tuning box leaves the reference ranges without allow_out_of_box.
  void validate() const;
  MonteCarloOptions monte_carlo_options() const;
};

/// Missing keys keep their defaults. Models may be given as plain names or as
/// objects {"name", "box": {dim: [lower, upper]}, "fixed": {param: value}}.
/// A fixed entry removes that dimension from the tuned box.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);
std::string hash_text(const std::string& text);

/// Applies a box/fixed override object (see config_from_json) to a setup.
void apply_model_overrides(ModelSetup& setup, const nlohmann::json& overrides);
nlohmann::json model_setup_to_json(const ModelSetup& setup);

struct PreprocessResult {
  SurvivalDataset dataset;
  std::vector<std::string> dropped_columns;
  std::size_t rows_dropped = 0;
  std::size_t cells_imputed = 0;
  std::vector<std::string> warnings;
};

/// Load, drop missing outcomes, drop high-missingness columns, dummy code,
/// impute and convert.
PreprocessResult preprocess_file(const std::string& path, const PreprocessOptions& options);

}  // namespace survbench
