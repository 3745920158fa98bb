#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "survbench/data.hpp"

namespace survbench {

/// Upper edges of the discrete time intervals, strictly ascending.
struct TimeGrid {
  std::vector<double> boundaries;

  int n_bins() const { return static_cast<int>(boundaries.size()); }
  /// Index of the first interval whose upper edge is >= t; times past the
  /// last edge map to the last interval.
  int bin_of(double t) const;
};

/// Edges at empirical quantiles of the event times (inverse-CDF definition),
/// with the last edge at the maximum observed time.
TimeGrid discretize_time(const SurvivalDataset& ds, int n_bins, Diagnostics* diag = nullptr);

struct TransformerConfig {
  int n_layers = 2;
  int d_ffn = 2;  // FFN width = d_ffn * d_model
  int n_heads = 2;
  int d_model = 32;
  double dropout = 0.1;
  double learning_rate = 1e-3;
  double reg_weight = 0.1;
  int n_epochs = 50;
  int n_bins = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;

  /// Names of tuned fields outside the tuning box.
  std::vector<std::string> out_of_box() const;
  /// Structural checks (positive sizes, d_model divisible by n_heads).
  void validate() const;
};

struct EncoderLayerParams {
  MatrixXd wq, wk, wv, wo;  // d x d
  MatrixXd bo;              // 1 x d
  MatrixXd ln1_gain, ln1_bias;
  MatrixXd w1;  // d x (d_ffn * d)
  MatrixXd b1;  // 1 x (d_ffn * d)
  MatrixXd w2;  // (d_ffn * d) x d
  MatrixXd b2;  // 1 x d
  MatrixXd ln2_gain, ln2_bias;
};

/// Every parameter is a MatrixXd so optimizers and checks can walk them
/// uniformly through visit().
struct TransformerParams {
  MatrixXd input_projection;  // d x n_features
  MatrixXd input_bias;        // 1 x d
  MatrixXd time_embedding;    // n_bins x d
  std::vector<EncoderLayerParams> layers;
  MatrixXd readout;       // d x 1
  MatrixXd readout_bias;  // 1 x 1
  /// Row 0 is the first threshold; row t > 0 is the pre-softplus increment
  /// from threshold t-1 to t.
  MatrixXd threshold_raw;  // n_bins x 1

  /// Ordinal thresholds alpha_t (non-decreasing by construction).
  VectorXd thresholds() const;

  /// f(name, matrix, regularized) for every parameter in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Same shapes, all zeros.
  TransformerParams zeros_like() const;
  bool all_finite() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("input_projection", self.input_projection, true);
    f("input_bias", self.input_bias, false);
    f("time_embedding", self.time_embedding, true);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      f(p + "wq", L.wq, true);
      f(p + "wk", L.wk, true);
      f(p + "wv", L.wv, true);
      f(p + "wo", L.wo, true);
      f(p + "bo", L.bo, false);
      f(p + "ln1_gain", L.ln1_gain, false);
      f(p + "ln1_bias", L.ln1_bias, false);
      f(p + "w1", L.w1, true);
      f(p + "b1", L.b1, false);
      f(p + "w2", L.w2, true);
      f(p + "b2", L.b2, false);
      f(p + "ln2_gain", L.ln2_gain, false);
      f(p + "ln2_bias", L.ln2_bias, false);
    }
    f("readout", self.readout, true);
    f("readout_bias", self.readout_bias, false);
    f("threshold_raw", self.threshold_raw, false);
  }
};

/// Parameters with every weight zero (layer-norm gains 1) and thresholds
/// as close to zero as the reparameterization allows.
TransformerParams zero_params(const TransformerConfig& cfg, Eigen::Index n_features, int n_bins);

/// Seeded Xavier initialization; thresholds start at the logit of the
/// Kaplan-Meier survival at each edge when `ds` is given.
TransformerParams init_params(const TransformerConfig& cfg, Eigen::Index n_features,
                              const TimeGrid& grid, const SurvivalDataset* ds = nullptr);

/// softmax(Q K^T / sqrt(d_k)) V with a row-wise softmax. The attention
/// weights are written to `weights` when provided.
MatrixXd self_attention(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v,
                        MatrixXd* weights = nullptr);

/// Row-wise layer normalization without the affine part.
MatrixXd layer_normalize(const MatrixXd& x);

/// Per-bin logits log(P(T > t) / P(T <= t)); dropout disabled.
VectorXd forward(const TransformerParams& params, const TransformerConfig& cfg, const VectorXd& x,
                 const TimeGrid& grid);

/// Negative log-likelihood of one row under the ordinal head. `grad`, when
/// given, receives d loss / d logits.
double ordinal_nll(const VectorXd& logits, double time, int event, const TimeGrid& grid,
                   VectorXd* grad = nullptr, Diagnostics* diag = nullptr);

/// Mean ordinal NLL over rows plus reg_weight times the mean squared value of
/// the regularized weight matrices. Evaluation mode.
double total_loss(const TransformerParams& params, const TransformerConfig& cfg,
                  const SurvivalDataset& ds, const TimeGrid& grid);

/// Analytic gradient of total_loss over `rows` (all rows when empty). With a
/// non-null `dropout_rng` dropout is active and the loss is the training loss.
TransformerParams loss_gradient(const TransformerParams& params, const TransformerConfig& cfg,
                                const SurvivalDataset& ds, const TimeGrid& grid,
                                std::span<const std::size_t> rows, double* loss = nullptr,
                                std::mt19937_64* dropout_rng = nullptr);

/// P(T > t) per bin after a running minimum (non-increasing in t).
VectorXd survival_curve(const TransformerParams& params, const TransformerConfig& cfg,
                        const VectorXd& x, const TimeGrid& grid);

/// Negative expected number of survived bins; higher means higher risk.
double predict_risk(const TransformerParams& params, const TransformerConfig& cfg,
                    const VectorXd& x, const TimeGrid& grid);

struct SurvivalTransformer {
  TransformerConfig config;
  TimeGrid grid;
  TransformerParams params;

  double predict_risk(const VectorXd& x) const;
  VectorXd predict_risk(const MatrixXd& x) const;
};

struct TrainOptions {
  bool record_loss = false;  // total loss before training and after every epoch
  bool allow_out_of_box = false;
};

struct TrainResult {
  SurvivalTransformer model;
  std::vector<double> loss_history;
  double final_loss = 0.0;
  std::vector<std::string> warnings;
};

/// Mini-batch Adam. Deterministic given cfg.seed.
TrainResult train(const SurvivalDataset& ds, const TransformerConfig& cfg,
                  const TrainOptions& options = {});

std::string transformer_to_json(const SurvivalTransformer& model);
SurvivalTransformer transformer_from_json(const std::string& text);

}  // namespace survbench
