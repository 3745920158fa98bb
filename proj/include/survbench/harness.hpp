#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "survbench/bayes_opt.hpp"
#include "survbench/data.hpp"

namespace survbench {

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  std::size_t n_rows = 500;
  std::size_t n_features = 20;
  std::vector<double> beta;  // padded with zeros up to n_features
  double weibull_shape = 1.5;
  double weibull_scale = 0.01;
  double censor_rate = 0.3;
  bool nonlinear = false;
  std::uint64_t seed = 42;

  void validate() const;
};

/// n = 500, p = 20 with five informative coefficients.
SynthSpec default_synth_spec();

struct SyntheticData {
  SurvivalDataset dataset;
  VectorXd true_eta;
  double censor_hazard = 0.0;
  double censored_fraction = 0.0;
};

/// Weibull proportional hazards with independent exponential censoring whose
/// rate is calibrated by bisection to the requested censored fraction.
SyntheticData generate_synthetic(const SynthSpec& spec);

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Models behind a common interface

enum class ModelKind { kCox, kSxgb, kStran };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

using ParamMap = std::map<std::string, double>;

/// Tuned box plus fixed (untuned) settings for one model.
struct ModelSetup {
  ModelKind kind = ModelKind::kCox;
  ParamSpace space;
  ParamMap fixed;
};

/// The reference tuning box for the model (empty for cox).
ParamSpace reference_space(ModelKind kind);
ModelSetup default_setup(ModelKind kind);
/// Names of dims in `space` that are unknown to the model or leave its box.
std::vector<std::string> outside_reference_box(ModelKind kind, const ParamSpace& space);

class FittedModel {
 public:
  virtual ~FittedModel() = default;
  virtual VectorXd predict_risk(const MatrixXd& x) const = 0;
  virtual std::string to_json() const = 0;
};

std::unique_ptr<FittedModel> fit_model(ModelKind kind, const SurvivalDataset& train,
                                       const ParamMap& params, std::uint64_t seed,
                                       bool allow_out_of_box = false);
std::unique_ptr<FittedModel> load_model(const std::string& json_text);

ParamMap merge_params(const ModelSetup& setup, const std::vector<double>& tuned);

// ---------------------------------------------------------------------------
// Nested CV and Monte Carlo

enum class SelectStage { kNone, kPreCv, kPerFold };

std::string to_string(SelectStage stage);
SelectStage parse_select_stage(const std::string& name);

struct SelectionOptions {
  SelectStage stage = SelectStage::kPreCv;
  int k_neighbors = 10;
  std::size_t top = 200;
};

struct HarnessOptions {
  int outer_k = 5;
  int inner_k = 3;
  int bayes_rounds = 25;
  SelectionOptions selection;
  bool allow_out_of_box = false;
};

struct FoldResult {
  int fold = 0;
  double c_index = 0.0;
  ParamMap tuned;
  int n_inner_evals = 0;
  double inner_best = 0.0;
  std::vector<std::size_t> test_rows;
  std::vector<std::string> selected_features;
};

struct NestedCvResult {
  std::vector<FoldResult> folds;
  double mean_c_index = 0.0;
};

/// Outer stratified k-fold; sxgb/stran are tuned inside each outer training
/// portion by Bayesian optimization over an inner stratified CV, refit on the
/// whole outer training portion and scored once on the held-out fold.
NestedCvResult nested_cv(const SurvivalDataset& ds, const ModelSetup& setup,
                         const HarnessOptions& options, std::uint64_t seed);

/// C-index of known true risk scores on the same outer folds.
std::vector<double> oracle_cv(const SurvivalDataset& ds, const VectorXd& true_eta, int outer_k,
                              std::uint64_t seed);

struct MonteCarloOptions {
  int reps = 10;
  HarnessOptions harness;
  std::uint64_t master_seed = 0;
  int jobs = 1;
};

struct RepetitionRecord {
  std::string model;
  int repetition = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double mean_c_index = 0.0;
  std::vector<double> fold_c_index;
  std::vector<ParamMap> tuned;
};

struct ModelAggregate {
  std::string model;
  double mean = 0.0;
  double sd = 0.0;
  int n_ok = 0;
  int n_failed = 0;
  bool single_rep = false;
  bool reference = false;  // the true-risk oracle row
};

struct ExperimentReport {
  std::vector<RepetitionRecord> records;
  std::vector<ModelAggregate> aggregates;
  nlohmann::json provenance;

  const ModelAggregate& aggregate(const std::string& model) const;
  bool any_failed() const;
};

/// Repetition r draws its splits from derive_seed(master_seed, r); all models
/// in a repetition share those splits.
ExperimentReport monte_carlo(const SurvivalDataset& ds, const std::vector<ModelSetup>& models,
                             const MonteCarloOptions& options,
                             const VectorXd* true_eta = nullptr);

/// Applies ReliefF on the event indicator and keeps the top columns in their
/// original order.
SurvivalDataset select_features(const SurvivalDataset& ds, const SelectionOptions& options,
                                std::uint64_t seed, std::vector<double>* weights = nullptr);

nlohmann::json report_to_json(const ExperimentReport& report);
/// Columns: model,repetition,fold,c_index.
std::string report_to_csv(const ExperimentReport& report);
/// One "<model> <mean> (<sd>)" line per model, four decimals.
std::string report_summary(const ExperimentReport& report);

}  // namespace survbench
