#include "survbench/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <json.hpp>

namespace survbench {

namespace {

constexpr double kLayerNormEps = 1e-8;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

using RowVec = Eigen::RowVectorXd;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

void softmax_rows(MatrixXd& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

struct NormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

MatrixXd layer_norm_forward(const MatrixXd& r, const MatrixXd& gain, const MatrixXd& bias,
                            NormCache* cache) {
  const auto t = r.rows();
  const auto d = static_cast<double>(r.cols());
  MatrixXd xhat(r.rows(), r.cols());
  VectorXd inv(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mu = r.row(i).mean();
    const double var = (r.row(i).array() - mu).square().sum() / d;
    inv[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = (r.row(i).array() - mu) * inv[i];
  }
  MatrixXd y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& gain, const NormCache& cache,
                             MatrixXd& dgain, MatrixXd& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const MatrixXd dxhat = dy.array().rowwise() * gain.row(0).array();
  MatrixXd dr(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dr.row(i) = cache.inv_std[i] * (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
  }
  return dr;
}

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  MatrixXd mask(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = keep(rng) ? scale : 0.0;
  }
  return mask;
}

struct LayerCache {
  MatrixXd x;
  MatrixXd q, k, v;
  std::vector<MatrixXd> attn;
  MatrixXd concat;
  MatrixXd mask1;
  NormCache norm1;
  MatrixXd y1;
  MatrixXd z, g;
  MatrixXd mask2;
  NormCache norm2;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  MatrixXd h_final;
};

MatrixXd layer_forward(const EncoderLayerParams& L, int n_heads, const MatrixXd& x, double dropout,
                       std::mt19937_64* rng, LayerCache* c) {
  const auto t = x.rows();
  const auto d = x.cols();
  const auto dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  MatrixXd q = x * L.wq;
  MatrixXd k = x * L.wk;
  MatrixXd v = x * L.wv;
  MatrixXd concat(t, d);
  std::vector<MatrixXd> attn(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    MatrixXd s = q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose() * scale;
    softmax_rows(s);
    concat.middleCols(h * dk, dk) = s * v.middleCols(h * dk, dk);
    attn[static_cast<std::size_t>(h)] = std::move(s);
  }
  MatrixXd a = (concat * L.wo).rowwise() + L.bo.row(0);
  MatrixXd mask1;
  if (rng && dropout > 0.0) {
    mask1 = dropout_mask(t, d, dropout, *rng);
    a = a.cwiseProduct(mask1);
  }
  NormCache n1;
  MatrixXd y1 = layer_norm_forward(x + a, L.ln1_gain, L.ln1_bias, c ? &n1 : nullptr);
  MatrixXd z = (y1 * L.w1).rowwise() + L.b1.row(0);
  MatrixXd g = z.unaryExpr([](double u) { return gelu(u); });
  MatrixXd f = (g * L.w2).rowwise() + L.b2.row(0);
  MatrixXd mask2;
  if (rng && dropout > 0.0) {
    mask2 = dropout_mask(t, d, dropout, *rng);
    f = f.cwiseProduct(mask2);
  }
  NormCache n2;
  MatrixXd y2 = layer_norm_forward(y1 + f, L.ln2_gain, L.ln2_bias, c ? &n2 : nullptr);
  if (c) {
    c->x = x;
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->attn = std::move(attn);
    c->concat = std::move(concat);
    c->mask1 = std::move(mask1);
    c->norm1 = std::move(n1);
    c->y1 = std::move(y1);
    c->z = std::move(z);
    c->g = std::move(g);
    c->mask2 = std::move(mask2);
    c->norm2 = std::move(n2);
  }
  return y2;
}

// Returns d loss / d layer input; accumulates parameter gradients into dL.
MatrixXd layer_backward(const EncoderLayerParams& L, int n_heads, const LayerCache& c,
                        const MatrixXd& dy2, EncoderLayerParams& dL) {
  const auto d = c.x.cols();
  const auto dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  MatrixXd dr2 = layer_norm_backward(dy2, L.ln2_gain, c.norm2, dL.ln2_gain, dL.ln2_bias);
  MatrixXd dy1 = dr2;
  MatrixXd df = c.mask2.size() ? MatrixXd(dr2.cwiseProduct(c.mask2)) : dr2;
  dL.w2.noalias() += c.g.transpose() * df;
  dL.b2.row(0) += df.colwise().sum();
  MatrixXd dz = (df * L.w2.transpose()).cwiseProduct(c.z.unaryExpr([](double u) { return gelu_grad(u); }));
  dL.w1.noalias() += c.y1.transpose() * dz;
  dL.b1.row(0) += dz.colwise().sum();
  dy1.noalias() += dz * L.w1.transpose();

  MatrixXd dr1 = layer_norm_backward(dy1, L.ln1_gain, c.norm1, dL.ln1_gain, dL.ln1_bias);
  MatrixXd dx = dr1;
  MatrixXd da = c.mask1.size() ? MatrixXd(dr1.cwiseProduct(c.mask1)) : dr1;
  dL.wo.noalias() += c.concat.transpose() * da;
  dL.bo.row(0) += da.colwise().sum();
  const MatrixXd dconcat = da * L.wo.transpose();

  MatrixXd dq(c.q.rows(), d);
  MatrixXd dk_all(c.k.rows(), d);
  MatrixXd dv(c.v.rows(), d);
  for (int h = 0; h < n_heads; ++h) {
    const auto& p = c.attn[static_cast<std::size_t>(h)];
    const auto doh = dconcat.middleCols(h * dk, dk);
    const MatrixXd dp = doh * c.v.middleCols(h * dk, dk).transpose();
    dv.middleCols(h * dk, dk) = p.transpose() * doh;
    const VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    const MatrixXd ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
    dq.middleCols(h * dk, dk) = ds * c.k.middleCols(h * dk, dk);
    dk_all.middleCols(h * dk, dk) = ds.transpose() * c.q.middleCols(h * dk, dk);
  }
  dL.wq.noalias() += c.x.transpose() * dq;
  dL.wk.noalias() += c.x.transpose() * dk_all;
  dL.wv.noalias() += c.x.transpose() * dv;
  dx.noalias() += dq * L.wq.transpose() + dk_all * L.wk.transpose() + dv * L.wv.transpose();
  return dx;
}

VectorXd forward_impl(const TransformerParams& P, const TransformerConfig& cfg, const VectorXd& x,
                      std::mt19937_64* rng, ForwardCache* cache) {
  const auto t = P.time_embedding.rows();
  const RowVec e = (P.input_projection * x).transpose() + P.input_bias.row(0);
  MatrixXd h = P.time_embedding.rowwise() + e;
  if (cache) cache->layers.resize(P.layers.size());
  for (std::size_t l = 0; l < P.layers.size(); ++l) {
    h = layer_forward(P.layers[l], cfg.n_heads, h, cfg.dropout, rng,
                      cache ? &cache->layers[l] : nullptr);
  }
  VectorXd s = h * P.readout;
  s.array() += P.readout_bias(0, 0);
  if (cache) cache->h_final = std::move(h);
  return s - P.thresholds().head(t);
}

void backward_impl(const TransformerParams& P, const TransformerConfig& cfg, const VectorXd& x,
                   const ForwardCache& cache, const VectorXd& dlogits, TransformerParams& G) {
  G.readout.noalias() += cache.h_final.transpose() * dlogits;
  G.readout_bias(0, 0) += dlogits.sum();
  MatrixXd dh = dlogits * P.readout.transpose();
  for (std::size_t l = P.layers.size(); l-- > 0;) {
    dh = layer_backward(P.layers[l], cfg.n_heads, cache.layers[l], dh, G.layers[l]);
  }
  G.time_embedding += dh;
  const RowVec de = dh.colwise().sum();
  G.input_projection.noalias() += de.transpose() * x.transpose();
  G.input_bias.row(0) += de;

  // alpha_t = raw_0 + sum_{s=1..t} softplus(raw_s); d loss / d alpha = -dlogits.
  const auto t = P.threshold_raw.rows();
  double suffix = 0.0;
  for (Eigen::Index s = t - 1; s >= 1; --s) {
    suffix += -dlogits[s];
    G.threshold_raw(s, 0) += sigmoid(P.threshold_raw(s, 0)) * suffix;
  }
  G.threshold_raw(0, 0) += -dlogits.sum();
}

struct RegStats {
  double sum_sq = 0.0;
  double count = 0.0;
};

RegStats regularization_stats(const TransformerParams& p) {
  RegStats r;
  p.visit([&](const std::string&, const MatrixXd& m, bool reg) {
    if (!reg) return;
    r.sum_sq += m.squaredNorm();
    r.count += static_cast<double>(m.size());
  });
  return r;
}

void check_features(const TransformerParams& p, const VectorXd& x) {
  if (x.size() != p.input_projection.cols()) {
    throw Error("dimension_mismatch", "feature vector length does not match transformer input");
  }
}

EncoderLayerParams make_layer(Eigen::Index d, Eigen::Index dff) {
  EncoderLayerParams L;
  L.wq = L.wk = L.wv = L.wo = MatrixXd::Zero(d, d);
  L.bo = MatrixXd::Zero(1, d);
  L.ln1_gain = L.ln2_gain = MatrixXd::Ones(1, d);
  L.ln1_bias = L.ln2_bias = MatrixXd::Zero(1, d);
  L.w1 = MatrixXd::Zero(d, dff);
  L.b1 = MatrixXd::Zero(1, dff);
  L.w2 = MatrixXd::Zero(dff, d);
  L.b2 = MatrixXd::Zero(1, d);
  return L;
}

}  // namespace

// ---------------------------------------------------------------------------

int TimeGrid::bin_of(double t) const {
  const auto it = std::lower_bound(boundaries.begin(), boundaries.end(), t);
  if (it == boundaries.end()) return n_bins() - 1;
  return static_cast<int>(it - boundaries.begin());
}

TimeGrid discretize_time(const SurvivalDataset& ds, int n_bins, Diagnostics* diag) {
  if (n_bins < 2) throw Error("invalid_argument", "n_bins must be at least 2");
  std::vector<double> event_times;
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    if (ds.event[static_cast<std::size_t>(i)] == 1) event_times.push_back(ds.time[i]);
  }
  if (event_times.empty()) throw Error("no_events", "no events in dataset");
  std::sort(event_times.begin(), event_times.end());
  if (event_times.front() == event_times.back()) {
    throw Error("degenerate_time", "degenerate time distribution: all event times are identical");
  }
  std::vector<double> unique_times = event_times;
  unique_times.erase(std::unique(unique_times.begin(), unique_times.end()), unique_times.end());
  if (unique_times.size() < static_cast<std::size_t>(n_bins)) {
    warn(diag, "only " + std::to_string(unique_times.size()) + " distinct event times for " +
                   std::to_string(n_bins) + " bins");
  }

  const double m = static_cast<double>(event_times.size());
  TimeGrid grid;
  for (int j = 1; j < n_bins; ++j) {
    const double q = static_cast<double>(j) / n_bins;
    auto idx = static_cast<std::size_t>(std::ceil(q * m - 1e-12));
    idx = std::clamp<std::size_t>(idx, 1, event_times.size()) - 1;
    const double b = event_times[idx];
    if (grid.boundaries.empty() || b > grid.boundaries.back()) grid.boundaries.push_back(b);
  }
  const double max_time = ds.time.maxCoeff();
  if (grid.boundaries.empty() || max_time > grid.boundaries.back()) grid.boundaries.push_back(max_time);
  if (grid.n_bins() < n_bins) {
    warn(diag, "time grid collapsed to " + std::to_string(grid.n_bins()) + " bins");
  }
  return grid;
}

std::vector<std::string> TransformerConfig::out_of_box() const {
  std::vector<std::string> bad;
  if (n_layers < 1 || n_layers > 10) bad.emplace_back("n_layers");
  if (d_ffn < 1 || d_ffn > 10) bad.emplace_back("d_ffn");
  if (!(dropout >= 0.1 && dropout <= 0.5)) bad.emplace_back("dropout");
  if (!(learning_rate >= 1e-6 && learning_rate <= 0.01)) bad.emplace_back("learning_rate");
  if (!(reg_weight >= 0.1 && reg_weight <= 3.0)) bad.emplace_back("reg_weight");
  if (n_epochs < 1 || n_epochs > 500) bad.emplace_back("n_epochs");
  return bad;
}

void TransformerConfig::validate() const {
  if (n_layers < 0 || d_ffn < 1 || n_heads < 1 || d_model < 1 || n_epochs < 0 || batch_size < 1 ||
      n_bins < 2) {
    throw Error("invalid_config", "transformer sizes must be positive");
  }
  if (d_model % n_heads != 0) throw Error("invalid_config", "d_model must be divisible by n_heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("invalid_config", "dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0) || !(reg_weight >= 0.0)) {
    throw Error("invalid_config", "learning_rate must be positive and reg_weight non-negative");
  }
}

VectorXd TransformerParams::thresholds() const {
  const auto t = threshold_raw.rows();
  VectorXd alpha(t);
  if (t == 0) return alpha;
  alpha[0] = threshold_raw(0, 0);
  for (Eigen::Index s = 1; s < t; ++s) alpha[s] = alpha[s - 1] + softplus(threshold_raw(s, 0));
  return alpha;
}

TransformerParams TransformerParams::zeros_like() const {
  TransformerParams out = *this;
  out.visit([](const std::string&, MatrixXd& m, bool) { m.setZero(); });
  return out;
}

bool TransformerParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const MatrixXd& m, bool) { ok = ok && m.allFinite(); });
  return ok;
}

TransformerParams zero_params(const TransformerConfig& cfg, Eigen::Index n_features, int n_bins) {
  cfg.validate();
  const Eigen::Index d = cfg.d_model;
  TransformerParams p;
  p.input_projection = MatrixXd::Zero(d, n_features);
  p.input_bias = MatrixXd::Zero(1, d);
  p.time_embedding = MatrixXd::Zero(n_bins, d);
  for (int l = 0; l < cfg.n_layers; ++l) p.layers.push_back(make_layer(d, d * cfg.d_ffn));
  p.readout = MatrixXd::Zero(d, 1);
  p.readout_bias = MatrixXd::Zero(1, 1);
  // softplus(-50) ~ 2e-22, so every threshold is zero to double precision.
  p.threshold_raw = MatrixXd::Constant(n_bins, 1, -50.0);
  p.threshold_raw(0, 0) = 0.0;
  return p;
}

TransformerParams init_params(const TransformerConfig& cfg, Eigen::Index n_features,
                              const TimeGrid& grid, const SurvivalDataset* ds) {
  auto p = zero_params(cfg, n_features, grid.n_bins());
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x1a17ULL));
  auto xavier = [&](MatrixXd& m, double fan_in, double fan_out) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = limit * u(rng);
    }
  };
  const double d = cfg.d_model;
  xavier(p.input_projection, static_cast<double>(n_features), d);
  {
    std::normal_distribution<double> normal(0.0, 0.1);
    for (Eigen::Index i = 0; i < p.time_embedding.size(); ++i) p.time_embedding.data()[i] = normal(rng);
  }
  for (auto& L : p.layers) {
    xavier(L.wq, d, d);
    xavier(L.wk, d, d);
    xavier(L.wv, d, d);
    xavier(L.wo, d, d);
    xavier(L.w1, d, static_cast<double>(L.w1.cols()));
    xavier(L.w2, static_cast<double>(L.w2.rows()), d);
  }
  xavier(p.readout, d, 1.0);

  // Thresholds from the Kaplan-Meier curve so the untrained head starts near
  // the marginal survival distribution.
  const int t = grid.n_bins();
  VectorXd alpha = VectorXd::LinSpaced(t, -1.0, 1.0);
  if (ds != nullptr && ds->n_rows() > 0) {
    std::vector<std::size_t> order(static_cast<std::size_t>(ds->n_rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      return ds->time[static_cast<Eigen::Index>(a)] < ds->time[static_cast<Eigen::Index>(b)];
    });
    double surv = 1.0;
    std::size_t at_risk = order.size();
    std::size_t i = 0;
    for (int b = 0; b < t; ++b) {
      while (i < order.size() && ds->time[static_cast<Eigen::Index>(order[i])] <= grid.boundaries[static_cast<std::size_t>(b)]) {
        const double ti = ds->time[static_cast<Eigen::Index>(order[i])];
        std::size_t deaths = 0;
        std::size_t leaving = 0;
        while (i < order.size() && ds->time[static_cast<Eigen::Index>(order[i])] == ti) {
          deaths += ds->event[order[i]] == 1 ? 1 : 0;
          ++leaving;
          ++i;
        }
        if (at_risk > 0) surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
        at_risk -= leaving;
      }
      const double s = std::clamp(surv, 0.02, 0.98);
      alpha[b] = std::log((1.0 - s) / s);
    }
  }
  p.threshold_raw(0, 0) = alpha[0];
  for (int b = 1; b < t; ++b) {
    p.threshold_raw(b, 0) = inverse_softplus(std::max(alpha[b] - alpha[b - 1], 0.05));
  }
  return p;
}

MatrixXd self_attention(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v, MatrixXd* weights) {
  if (q.cols() != k.cols()) throw Error("dimension_mismatch", "Q and K need the same column count");
  if (k.rows() != v.rows()) throw Error("dimension_mismatch", "K and V need the same row count");
  MatrixXd s = q * k.transpose() / std::sqrt(static_cast<double>(k.cols()));
  softmax_rows(s);
  MatrixXd out = s * v;
  if (weights) *weights = std::move(s);
  return out;
}

MatrixXd layer_normalize(const MatrixXd& x) {
  NormCache c;
  layer_norm_forward(x, MatrixXd::Ones(1, x.cols()), MatrixXd::Zero(1, x.cols()), &c);
  return c.xhat;
}

VectorXd forward(const TransformerParams& params, const TransformerConfig& cfg, const VectorXd& x,
                 const TimeGrid& grid) {
  check_features(params, x);
  if (params.time_embedding.rows() != grid.n_bins()) {
    throw Error("dimension_mismatch", "parameters do not match the time grid");
  }
  if (!params.all_finite()) throw Error("non_finite", "transformer parameters are not finite");
  return forward_impl(params, cfg, x, nullptr, nullptr);
}

double ordinal_nll(const VectorXd& logits, double time, int event, const TimeGrid& grid,
                   VectorXd* grad, Diagnostics* diag) {
  if (logits.size() != grid.n_bins()) throw Error("dimension_mismatch", "logits length must equal n_bins");
  if (!grid.boundaries.empty() && time > grid.boundaries.back()) {
    warn(diag, "time beyond grid clamped to last bin");
  }
  const int b = grid.bin_of(time);
  if (grad) grad->setZero(logits.size());
  double loss = 0.0;
  // -log sigmoid(l) = softplus(-l); -log(1 - sigmoid(l)) = softplus(l).
  const int last_survived = event == 1 ? b - 1 : b;
  for (int t = 0; t <= last_survived; ++t) {
    loss += softplus(-logits[t]);
    if (grad) (*grad)[t] = -sigmoid(-logits[t]);
  }
  if (event == 1) {
    loss += softplus(logits[b]);
    if (grad) (*grad)[b] = sigmoid(logits[b]);
  }
  return loss;
}

double total_loss(const TransformerParams& params, const TransformerConfig& cfg,
                  const SurvivalDataset& ds, const TimeGrid& grid) {
  double sum = 0.0;
  VectorXd x(ds.n_features());
  for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
    x = ds.features.row(i).transpose();
    sum += ordinal_nll(forward_impl(params, cfg, x, nullptr, nullptr), ds.time[i],
                       ds.event[static_cast<std::size_t>(i)], grid);
  }
  const auto reg = regularization_stats(params);
  const double mean_sq = reg.count > 0 ? reg.sum_sq / reg.count : 0.0;
  return sum / static_cast<double>(std::max<Eigen::Index>(ds.n_rows(), 1)) + cfg.reg_weight * mean_sq;
}

TransformerParams loss_gradient(const TransformerParams& params, const TransformerConfig& cfg,
                                const SurvivalDataset& ds, const TimeGrid& grid,
                                std::span<const std::size_t> rows, double* loss,
                                std::mt19937_64* dropout_rng) {
  TransformerParams g = params.zeros_like();
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(static_cast<std::size_t>(ds.n_rows()));
    std::iota(all.begin(), all.end(), std::size_t{0});
    rows = all;
  }
  ForwardCache cache;
  VectorXd x(ds.n_features());
  VectorXd dlogits;
  double sum = 0.0;
  for (auto r : rows) {
    const auto ri = static_cast<Eigen::Index>(r);
    x = ds.features.row(ri).transpose();
    const VectorXd logits = forward_impl(params, cfg, x, dropout_rng, &cache);
    sum += ordinal_nll(logits, ds.time[ri], ds.event[r], grid, &dlogits);
    backward_impl(params, cfg, x, cache, dlogits, g);
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  g.visit([&](const std::string&, MatrixXd& m, bool) { m *= inv_n; });

  const auto reg = regularization_stats(params);
  if (reg.count > 0) {
    const double coef = 2.0 * cfg.reg_weight / reg.count;
    // Walk params and grads in lockstep; visit order is fixed.
    std::vector<const MatrixXd*> src;
    params.visit([&](const std::string&, const MatrixXd& m, bool reg_on) { src.push_back(reg_on ? &m : nullptr); });
    std::size_t i = 0;
    g.visit([&](const std::string&, MatrixXd& m, bool) {
      if (src[i] != nullptr) m += coef * *src[i];
      ++i;
    });
  }
  if (loss) {
    *loss = sum * inv_n + (reg.count > 0 ? cfg.reg_weight * reg.sum_sq / reg.count : 0.0);
  }
  return g;
}

VectorXd survival_curve(const TransformerParams& params, const TransformerConfig& cfg,
                        const VectorXd& x, const TimeGrid& grid) {
  const VectorXd logits = forward(params, cfg, x, grid);
  VectorXd s(logits.size());
  double running = 1.0;
  for (Eigen::Index t = 0; t < logits.size(); ++t) {
    running = std::min(running, sigmoid(logits[t]));
    s[t] = running;
  }
  return s;
}

double predict_risk(const TransformerParams& params, const TransformerConfig& cfg,
                    const VectorXd& x, const TimeGrid& grid) {
  return -survival_curve(params, cfg, x, grid).sum();
}

double SurvivalTransformer::predict_risk(const VectorXd& x) const {
  return survbench::predict_risk(params, config, x, grid);
}

VectorXd SurvivalTransformer::predict_risk(const MatrixXd& x) const {
  VectorXd out(x.rows());
  VectorXd row(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    row = x.row(i).transpose();
    out[i] = predict_risk(row);
  }
  return out;
}

TrainResult train(const SurvivalDataset& ds, const TransformerConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  ds.validate();
  if (ds.n_events() == 0) throw Error("no_events", "no events in dataset");
  TrainResult result;
  if (const auto bad = cfg.out_of_box(); !bad.empty()) {
    std::string names;
    for (const auto& b : bad) names += (names.empty() ? "" : ", ") + b;
    if (!options.allow_out_of_box) {
      throw Error("out_of_box", "transformer config outside tuning box: " + names);
    }
    result.warnings.push_back("transformer config outside tuning box: " + names);
  }

  Diagnostics diag;
  auto& model = result.model;
  model.config = cfg;
  model.grid = discretize_time(ds, cfg.n_bins, &diag);
  model.params = init_params(cfg, ds.n_features(), model.grid, &ds);
  for (auto& w : diag.warnings) result.warnings.push_back(std::move(w));

  auto& params = model.params;
  TransformerParams m1 = params.zeros_like();
  TransformerParams m2 = params.zeros_like();
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  if (options.record_loss) result.loss_history.push_back(total_loss(params, cfg, ds, model.grid));

  const auto n = static_cast<std::size_t>(ds.n_rows());
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      double batch_loss = 0.0;
      auto grad = loss_gradient(params, cfg, ds, model.grid,
                                std::span<const std::size_t>(order.data() + start, end - start),
                                &batch_loss, cfg.dropout > 0.0 ? &rng : nullptr);
      if (!std::isfinite(batch_loss)) {
        throw Error("divergence", "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss * static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      std::vector<MatrixXd*> gs;
      grad.visit([&](const std::string&, MatrixXd& m, bool) { gs.push_back(&m); });
      std::vector<MatrixXd*> ms;
      m1.visit([&](const std::string&, MatrixXd& m, bool) { ms.push_back(&m); });
      std::vector<MatrixXd*> vs;
      m2.visit([&](const std::string&, MatrixXd& m, bool) { vs.push_back(&m); });
      std::size_t i = 0;
      params.visit([&](const std::string&, MatrixXd& w, bool) {
        const MatrixXd& g = *gs[i];
        MatrixXd& m = *ms[i];
        MatrixXd& v = *vs[i];
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
        w.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
        ++i;
      });
    }
    if (!std::isfinite(epoch_loss) || !params.all_finite()) {
      throw Error("divergence", "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
    }
    if (options.record_loss) result.loss_history.push_back(total_loss(params, cfg, ds, model.grid));
  }
  result.final_loss = options.record_loss && !result.loss_history.empty()
                          ? result.loss_history.back()
                          : total_loss(params, cfg, ds, model.grid);
  return result;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json matrix_to_json(const MatrixXd& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), m.rows(), m.cols()) = m;
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
    throw Error("invalid_model", "malformed matrix in transformer document");
  }
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), shape[0], shape[1]);
}

nlohmann::json config_to_json(const TransformerConfig& c) {
  return {{"n_layers", c.n_layers},   {"d_ffn", c.d_ffn},
          {"n_heads", c.n_heads},     {"d_model", c.d_model},
          {"dropout", c.dropout},     {"learning_rate", c.learning_rate},
          {"reg_weight", c.reg_weight}, {"n_epochs", c.n_epochs},
          {"n_bins", c.n_bins},       {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

}  // namespace

std::string transformer_to_json(const SurvivalTransformer& model) {
  nlohmann::json doc;
  doc["model"] = "stran";
  doc["config"] = config_to_json(model.config);
  doc["grid"] = model.grid.boundaries;
  nlohmann::json params;
  model.params.visit([&](const std::string& name, const MatrixXd& m, bool) { params[name] = matrix_to_json(m); });
  doc["params"] = std::move(params);
  return doc.dump(2);
}

SurvivalTransformer transformer_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  SurvivalTransformer model;
  const auto& c = doc.at("config");
  auto& cfg = model.config;
  cfg.n_layers = c.at("n_layers");
  cfg.d_ffn = c.at("d_ffn");
  cfg.n_heads = c.at("n_heads");
  cfg.d_model = c.at("d_model");
  cfg.dropout = c.at("dropout");
  cfg.learning_rate = c.at("learning_rate");
  cfg.reg_weight = c.at("reg_weight");
  cfg.n_epochs = c.at("n_epochs");
  cfg.n_bins = c.at("n_bins");
  cfg.batch_size = c.at("batch_size");
  cfg.seed = c.at("seed");
  model.grid.boundaries = doc.at("grid").get<std::vector<double>>();
  const auto& params = doc.at("params");
  const auto n_features = matrix_from_json(params.at("input_projection")).cols();
  model.params = zero_params(cfg, n_features, model.grid.n_bins());
  model.params.visit([&](const std::string& name, MatrixXd& m, bool) {
    MatrixXd loaded = matrix_from_json(params.at(name));
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw Error("invalid_model", "shape mismatch for parameter " + name);
    }
    m = std::move(loaded);
  });
  return model;
}

}  // namespace survbench
