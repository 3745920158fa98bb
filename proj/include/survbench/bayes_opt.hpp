#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "survbench/common.hpp"

namespace survbench {

enum class DimKind { kContinuous, kLogContinuous, kInteger };

struct ParamDim {
  std::string name;
  DimKind kind = DimKind::kContinuous;
  double lower = 0.0;
  double upper = 1.0;
};

/// Ordered hyperparameter box. Points are exchanged with the optimizer in
/// the unit cube and decoded on the way out.
class ParamSpace {
 public:
  ParamSpace() = default;
  explicit ParamSpace(std::vector<ParamDim> dims);

  std::size_t size() const { return dims_.size(); }
  const std::vector<ParamDim>& dims() const { return dims_; }
  std::size_t index_of(const std::string& name) const;

  /// Unit cube -> parameter values (integers rounded, log dims exponentiated).
  std::vector<double> decode(const VectorXd& unit) const;
  VectorXd encode(const std::vector<double>& values) const;

 private:
  std::vector<ParamDim> dims_;
};

struct Trial {
  VectorXd unit;
  std::vector<double> params;
  double objective = 0.0;
};

struct TrialHistory {
  std::vector<Trial> trials;

  bool empty() const { return trials.empty(); }
  /// Index of the best trial; the earliest wins ties. Requires !empty().
  std::size_t incumbent() const;
};

struct GpHyperparams {
  double length_scale = 0.3;
  double signal_variance = 1.0;  // in units of the standardized objective
  double noise_variance = 1e-6;
};

/// Exact GP regression with an isotropic Matern-5/2 kernel and a constant
/// mean equal to the sample mean of the observations.
class GaussianProcess {
 public:
  GaussianProcess(std::vector<VectorXd> x, std::vector<double> y, GpHyperparams hp);

  /// Chooses length scale and signal variance on a grid by maximum marginal
  /// likelihood.
  static GaussianProcess fit(std::vector<VectorXd> x, std::vector<double> y,
                             double noise_variance = 1e-6);

  struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
  };
  Posterior posterior(const VectorXd& query) const;

  double log_marginal_likelihood() const { return log_marginal_; }
  const GpHyperparams& hyperparams() const { return hp_; }
  double prior_mean() const { return y_mean_; }
  double prior_variance() const { return hp_.signal_variance * y_scale_ * y_scale_; }

 private:
  std::vector<VectorXd> x_;
  GpHyperparams hp_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
  MatrixXd chol_l_;  // lower Cholesky factor of K + noise I
  VectorXd alpha_;   // (K + noise I)^-1 (y - mean) / scale
  double log_marginal_ = 0.0;
};

double matern52(double distance, double length_scale, double signal_variance);

/// Posterior at `query` given the history, with hyperparameters fit by grid.
GaussianProcess::Posterior gp_posterior(const TrialHistory& history, const VectorXd& query);

/// Expected improvement for maximization.
double expected_improvement(double mean, double variance, double best_so_far);

struct SuggestOptions {
  int n_initial = 5;
  int n_candidates = 1024;
  int n_local = 256;
};

/// Next point in the unit cube.
VectorXd suggest(const TrialHistory& history, const ParamSpace& space, std::uint64_t seed,
                 const SuggestOptions& options = {});

using Objective = std::function<double(const std::vector<double>& params)>;

struct OptimizeResult {
  std::vector<double> best_params;
  double best_objective = 0.0;
  TrialHistory history;
  std::vector<std::string> warnings;
};

/// suggest -> evaluate -> record, n_rounds times. Non-finite objective values
/// are recorded as 0.0. A non-empty `resume` history is continued.
OptimizeResult optimize(const Objective& objective, const ParamSpace& space, int n_rounds,
                        std::uint64_t seed, TrialHistory resume = {},
                        const SuggestOptions& options = {});

std::string history_to_json(const TrialHistory& history, const ParamSpace& space);
TrialHistory history_from_json(const std::string& text, const ParamSpace& space);

}  // namespace survbench
