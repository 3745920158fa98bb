#pragma once

#include <string>
#include <vector>

#include "survbench/data.hpp"

namespace survbench {

/// Breslow log partial likelihood with its gradient and Hessian in beta.
struct CoxDerivatives {
  double log_likelihood = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

double partial_log_likelihood(const VectorXd& beta, const SurvivalDataset& ds);

CoxDerivatives partial_log_likelihood_derivatives(const VectorXd& beta, const MatrixXd& x,
                                                  const VectorXd& time, std::span<const int> event,
                                                  bool with_hessian = true);

struct CoxModel {
  VectorXd beta;
  std::vector<std::string> feature_names;
  bool converged = false;
  int n_iterations = 0;
  double final_gradient_norm = 0.0;
  std::vector<std::string> warnings;

  /// Linear predictor x'beta; higher means higher hazard.
  double predict_risk(const VectorXd& x) const;
  VectorXd predict_risk(const MatrixXd& x) const;
};

struct CoxFitOptions {
  int max_iter = 100;
  double tol = 1e-8;
  int max_halvings = 20;
  double separation_bound = 50.0;
};

/// Newton-Raphson with step halving on standardized features; coefficients
/// are reported on the original feature scale.
CoxModel fit_cox(const SurvivalDataset& ds, const CoxFitOptions& options = {});

std::string cox_to_json(const CoxModel& model);
CoxModel cox_from_json(const std::string& text);

}  // namespace survbench
