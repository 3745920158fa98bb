#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "survbench/data.hpp"

namespace survbench {

struct BoostHyperparams {
  double eta = 0.05;
  int max_depth = 3;
  double subsample = 0.8;
  double colsample_bytree = 0.8;
  double gamma = 1e-3;
  double min_child_weight = 1e-6;
  double alpha = 0.0;
  double lambda = 1.0;
  int n_rounds = 200;

  /// Names of fields lying outside the tuning box. n_rounds is not boxed.
  std::vector<std::string> out_of_box() const;
  BoostHyperparams clamped() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // x[feature] < threshold
  int right = -1;  // x[feature] >= threshold
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Nodes are stored in creation order; index 0 is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const double* x) const;
  int depth() const;
};

struct TreeEnsemble {
  std::vector<RegressionTree> trees;
  double base_score = 0.0;
  BoostHyperparams hyperparams;
  std::uint64_t seed = 0;
  Eigen::Index n_features = 0;
  std::vector<std::string> feature_names;
  /// Negative log partial likelihood before round 1 and after every round.
  std::vector<double> training_loss;
  std::vector<std::string> warnings;

  double predict_risk(const VectorXd& x) const;
  VectorXd predict_risk(const MatrixXd& x) const;
};

struct CoxGradHess {
  VectorXd gradient;
  VectorXd hessian;
};

/// Per-row derivatives of the Breslow negative log partial likelihood with
/// respect to each row's score. Only the diagonal of the Hessian is returned,
/// clamped below at 1e-12.
CoxGradHess cox_grad_hess(const VectorXd& scores, const VectorXd& time, std::span<const int> event);
inline CoxGradHess cox_grad_hess(const VectorXd& scores, const SurvivalDataset& ds) {
  return cox_grad_hess(scores, ds.time, ds.event);
}

/// Negative Breslow log partial likelihood of arbitrary per-row scores.
double cox_negative_log_likelihood(const VectorXd& scores, const VectorXd& time,
                                   std::span<const int> event);

enum class OutOfBoxPolicy { kClamp, kAllow };

struct BoostFitOptions {
  OutOfBoxPolicy out_of_box = OutOfBoxPolicy::kClamp;
  bool record_loss = false;
};

TreeEnsemble fit_sxgb(const SurvivalDataset& ds, const BoostHyperparams& hp, std::uint64_t seed,
                      const BoostFitOptions& options = {});

/// Second-order split gain with L1 (alpha) and L2 (lambda) leaf penalties,
/// before subtracting gamma.
double split_gain(double g_left, double h_left, double g_right, double h_right, double alpha,
                  double lambda);
double leaf_weight(double g, double h, double alpha, double lambda);

std::string ensemble_to_json(const TreeEnsemble& ens);
TreeEnsemble ensemble_from_json(const std::string& text);

}  // namespace survbench
