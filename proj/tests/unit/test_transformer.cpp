#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "survbench/harness.hpp"
#include "survbench/transformer.hpp"

using namespace survbench;

namespace {

TransformerConfig tiny_config() {
  TransformerConfig c;
  c.d_model = 4;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_ffn = 2;
  c.n_bins = 2;
  c.dropout = 0.0;
  c.reg_weight = 0.3;
  c.seed = 5;
  return c;
}

SurvivalDataset tiny_data() {
  SurvivalDataset ds;
  ds.features = MatrixXd{{0.3, -1.2, 0.5}, {1.1, 0.4, -0.7}, {-0.6, 0.9, 0.2},
                         {0.8, -0.3, -1.5}, {-1.4, 0.1, 0.6}, {0.2, 1.3, -0.4}};
  ds.feature_names = {"a", "b", "c"};
  ds.time = VectorXd{{2.0, 5.0, 3.0, 8.0, 1.0, 6.0}};
  ds.event = {1, 0, 1, 1, 0, 1};
  return ds;
}

// Random values in every parameter so no gradient is structurally zero.
TransformerParams jittered(const TransformerConfig& cfg, const SurvivalDataset& ds, const TimeGrid& grid) {
  auto p = init_params(cfg, ds.n_features(), grid, &ds);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z(0.0, 0.3);
  p.visit([&](const std::string&, MatrixXd& m, bool) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += z(rng);
  });
  return p;
}

SurvivalDataset synth(std::size_t n, std::size_t p, std::vector<double> beta, std::uint64_t seed) {
  SynthSpec s;
  s.n_rows = n;
  s.n_features = p;
  s.beta = std::move(beta);
  s.seed = seed;
  return generate_synthetic(s).dataset;
}

// Independent forward pass written with plain loops.
MatrixXd ref_layer_norm(const MatrixXd& r, const MatrixXd& gain, const MatrixXd& bias) {
  MatrixXd y(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double mu = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) mu += r(i, j);
    mu /= static_cast<double>(r.cols());
    double var = 0.0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) var += (r(i, j) - mu) * (r(i, j) - mu);
    var /= static_cast<double>(r.cols());
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      y(i, j) = (r(i, j) - mu) / std::sqrt(var + 1e-8) * gain(0, j) + bias(0, j);
    }
  }
  return y;
}

MatrixXd ref_matmul(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd c = MatrixXd::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

VectorXd ref_forward(const TransformerParams& P, int n_heads, const VectorXd& x) {
  const auto T = P.time_embedding.rows();
  const auto d = P.time_embedding.cols();
  MatrixXd h(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) {
      double e = P.input_bias(0, j);
      for (Eigen::Index f = 0; f < x.size(); ++f) e += P.input_projection(j, f) * x[f];
      h(t, j) = e + P.time_embedding(t, j);
    }
  }
  for (const auto& L : P.layers) {
    const MatrixXd q = ref_matmul(h, L.wq), k = ref_matmul(h, L.wk), v = ref_matmul(h, L.wv);
    const auto dk = d / n_heads;
    MatrixXd concat = MatrixXd::Zero(T, d);
    for (int hd = 0; hd < n_heads; ++hd) {
      for (Eigen::Index i = 0; i < T; ++i) {
        std::vector<double> w(static_cast<std::size_t>(T));
        double norm = 0.0;
        for (Eigen::Index j = 0; j < T; ++j) {
          double s = 0.0;
          for (Eigen::Index c = 0; c < dk; ++c) s += q(i, hd * dk + c) * k(j, hd * dk + c);
          w[static_cast<std::size_t>(j)] = std::exp(s / std::sqrt(static_cast<double>(dk)));
          norm += w[static_cast<std::size_t>(j)];
        }
        for (Eigen::Index j = 0; j < T; ++j)
          for (Eigen::Index c = 0; c < dk; ++c)
            concat(i, hd * dk + c) += w[static_cast<std::size_t>(j)] / norm * v(j, hd * dk + c);
      }
    }
    MatrixXd a = ref_matmul(concat, L.wo);
    for (Eigen::Index i = 0; i < T; ++i) a.row(i) += L.bo.row(0);
    const MatrixXd y1 = ref_layer_norm(h + a, L.ln1_gain, L.ln1_bias);
    MatrixXd z = ref_matmul(y1, L.w1);
    for (Eigen::Index i = 0; i < T; ++i) z.row(i) += L.b1.row(0);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double u = z.data()[i];
      z.data()[i] = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
    }
    MatrixXd f = ref_matmul(z, L.w2);
    for (Eigen::Index i = 0; i < T; ++i) f.row(i) += L.b2.row(0);
    h = ref_layer_norm(y1 + f, L.ln2_gain, L.ln2_bias);
  }
  VectorXd out(T);
  double alpha = 0.0;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double raw = P.threshold_raw(t, 0);
    alpha = t == 0 ? raw : alpha + std::log1p(std::exp(raw));
    double s = P.readout_bias(0, 0);
    for (Eigen::Index j = 0; j < d; ++j) s += h(t, j) * P.readout(j, 0);
    out[t] = s - alpha;
  }
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_SUITE("transformer") {
  TEST_CASE("time grid") {
    SurvivalDataset ds;
    ds.features = MatrixXd::Zero(4, 1);
    ds.feature_names = {"x"};
    ds.time = VectorXd{{6.0, 12.0, 18.0, 24.0}};
    ds.event = {1, 1, 1, 1};
    const auto g = discretize_time(ds, 2);
    CHECK(g.boundaries == std::vector<double>{12.0, 24.0});
    CHECK(discretize_time(ds, 4).boundaries == std::vector<double>{6.0, 12.0, 18.0, 24.0});
    CHECK(g.bin_of(12.0) == 0);
    CHECK(g.bin_of(12.5) == 1);
    ds.time = VectorXd{{5.0, 5.0, 5.0, 9.0}};
    ds.event = {1, 1, 1, 0};
    CHECK_THROWS_AS(discretize_time(ds, 2), Error);
  }

  TEST_CASE("attention") {
    const MatrixXd v1 = MatrixXd::Random(1, 3);
    CHECK(self_attention(MatrixXd::Random(1, 3), MatrixXd::Random(1, 3), v1) == v1);

    MatrixXd w;
    self_attention(MatrixXd::Random(4, 8), MatrixXd::Random(4, 8), MatrixXd::Random(4, 8), &w);
    for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-12);

    const MatrixXd q = 20.0 * MatrixXd::Identity(2, 2);
    const MatrixXd v{{1.0, 2.0}, {3.0, 4.0}};
    const MatrixXd out = self_attention(q, q, v);
    CHECK((out - v).cwiseAbs().maxCoeff() < 1e-6);

    const MatrixXd x = MatrixXd::Random(5, 6) * 3.0;
    const MatrixXd n = layer_normalize(x);
    for (Eigen::Index i = 0; i < 5; ++i) {
      CHECK(std::abs(n.row(i).mean()) < 1e-6);
      CHECK(std::abs(n.row(i).squaredNorm() / 6.0 - 1.0) < 1e-6);
    }
  }

  TEST_CASE("zero network") {
    auto cfg = tiny_config();
    const auto p = zero_params(cfg, 3, 2);
    TimeGrid grid{{1.0, 2.0}};
    const VectorXd x = VectorXd::Random(3);
    // The last threshold sits softplus(-50) above the first.
    CHECK(forward(p, cfg, x, grid).cwiseAbs().maxCoeff() < 1e-20);
    CHECK(survival_curve(p, cfg, x, grid) == VectorXd::Constant(2, 0.5));
    CHECK(predict_risk(p, cfg, x, grid) == -0.5 * 2);

    auto inc = p;
    inc.threshold_raw(0, 0) = -1.0;
    inc.threshold_raw(1, 0) = 0.5;
    const VectorXd s = survival_curve(inc, cfg, x, grid);
    CHECK(s[1] < s[0]);
  }

  TEST_CASE("zero depth reduces to a linear ordinal model") {
    auto cfg = tiny_config();
    cfg.n_layers = 0;
    auto p = zero_params(cfg, 3, 2);
    const VectorXd beta{{0.7, -1.3, 0.25}};
    p.input_projection.row(0) = beta.transpose();
    p.readout(0, 0) = 1.0;
    p.threshold_raw(0, 0) = -0.4;
    p.threshold_raw(1, 0) = 0.9;
    const VectorXd alpha = p.thresholds();
    TimeGrid grid{{1.0, 2.0}};
    const auto ds = tiny_data();
    for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
      const VectorXd x = ds.features.row(i).transpose();
      const VectorXd logits = forward(p, cfg, x, grid);
      const double xb = x.dot(beta);
      for (int t = 0; t < 2; ++t) CHECK(logits[t] == xb - alpha[t]);
    }
  }

  TEST_CASE("forward matches a hand-rolled oracle") {
    for (int heads : {1, 2}) {
      auto cfg = tiny_config();
      cfg.n_heads = heads;
      const auto ds = tiny_data();
      const auto grid = discretize_time(ds, 2);
      const auto p = jittered(cfg, ds, grid);
      for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
        const VectorXd x = ds.features.row(i).transpose();
        CHECK((forward(p, cfg, x, grid) - ref_forward(p, heads, x)).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }

  TEST_CASE("ordinal head") {
    TimeGrid one{{1.0}};
    CHECK(std::abs(ordinal_nll(VectorXd::Zero(1), 1.0, 1, one) - std::log(2.0)) < 1e-12);

    TimeGrid three{{1.0, 2.0, 3.0}};
    CHECK(ordinal_nll(VectorXd::Zero(3), 0.5, 0, three) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    // Later bins cannot matter for a row censored in bin 0.
    CHECK(ordinal_nll(VectorXd{{0.0, -7.0, 9.0}}, 0.5, 0, three) ==
          ordinal_nll(VectorXd{{0.0, 4.0, -3.0}}, 0.5, 0, three));

    const double expect = -(2.0 * oracle::log_sigmoid(2.0)) - std::log(1.0 - sigmoid(-2.0));
    CHECK(ordinal_nll(VectorXd{{2.0, 2.0, -2.0}}, 3.0, 1, three) == doctest::Approx(expect).epsilon(1e-14));

    VectorXd g;
    const VectorXd l{{0.3, -0.2, 1.1}};
    ordinal_nll(l, 2.0, 1, three, &g);
    auto f = [&](const VectorXd& v) { return ordinal_nll(v, 2.0, 1, three); };
    CHECK(oracle::rel_error(g, oracle::central_gradient(f, l, 1e-6), 1e-8) < 1e-6);
  }

  TEST_CASE("gradient check for every parameter group") {
    const auto cfg = tiny_config();
    const auto ds = tiny_data();
    const auto grid = discretize_time(ds, 2);
    auto p = jittered(cfg, ds, grid);
    double loss = 0.0;
    const auto g = loss_gradient(p, cfg, ds, grid, {}, &loss);
    CHECK(loss == doctest::Approx(total_loss(p, cfg, ds, grid)).epsilon(1e-13));

    std::vector<MatrixXd*> params;
    p.visit([&](const std::string&, MatrixXd& m, bool) { params.push_back(&m); });
    std::vector<std::pair<std::string, const MatrixXd*>> grads;
    g.visit([&](const std::string& name, const MatrixXd& m, bool) { grads.emplace_back(name, &m); });
    REQUIRE(params.size() == grads.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      MatrixXd& m = *params[k];
      MatrixXd numeric(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + 1e-4;
        const double up = total_loss(p, cfg, ds, grid);
        m.data()[i] = keep - 1e-4;
        const double down = total_loss(p, cfg, ds, grid);
        m.data()[i] = keep;
        numeric.data()[i] = (up - down) / 2e-4;
      }
      const double err = (*grads[k].second - numeric).norm() / std::max(numeric.norm(), 1e-8);
      INFO(grads[k].first);
      CHECK(err < 1e-3);
    }
  }

  TEST_CASE("risk monotonicity and threshold shift invariance") {
    auto cfg = tiny_config();
    const auto ds = tiny_data();
    const auto grid = discretize_time(ds, 2);
    const auto p = jittered(cfg, ds, grid);
    auto shifted = p;
    shifted.threshold_raw(0, 0) += 1.7;
    shifted.readout_bias(0, 0) += 1.7;
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < ds.n_rows(); ++i) {
      const VectorXd x = ds.features.row(i).transpose();
      a.push_back(predict_risk(p, cfg, x, grid));
      b.push_back(predict_risk(shifted, cfg, x, grid));
      const VectorXd s = survival_curve(p, cfg, x, grid);
      for (Eigen::Index t = 1; t < s.size(); ++t) CHECK(s[t] <= s[t - 1]);
    }
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a.size(); ++j) CHECK((a[i] < a[j]) == (b[i] < b[j]));
  }

  TEST_CASE("training") {
    const auto ds = synth(200, 4, {1.5, -1.0}, 3);
    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.d_ffn = 1;
    cfg.n_bins = 4;
    cfg.learning_rate = 1e-3;
    cfg.n_epochs = 50;
    cfg.seed = 4;
    TrainOptions opts;
    opts.record_loss = true;
    const auto r = train(ds, cfg, opts);
    REQUIRE(r.loss_history.size() == 51);
    CHECK(r.loss_history[10] < r.loss_history[0]);
    CHECK(r.loss_history.back() < r.loss_history.front());
    CHECK(train(ds, cfg, opts).final_loss == r.final_loss);

    auto slow = cfg;
    slow.n_epochs = 1;
    slow.learning_rate = 1e-6;
    const auto moved = train(ds, slow).model.params;
    const auto start = init_params(slow, ds.n_features(), discretize_time(ds, slow.n_bins), &ds);
    double worst = 0.0;
    std::vector<const MatrixXd*> before;
    start.visit([&](const std::string&, const MatrixXd& m, bool) { before.push_back(&m); });
    std::size_t k = 0;
    moved.visit([&](const std::string&, const MatrixXd& m, bool) {
      worst = std::max(worst, (m - *before[k++]).cwiseAbs().maxCoeff());
    });
    CHECK(worst < 1e-3);
  }

  TEST_CASE("config box and json round trip") {
    const auto ds = synth(120, 3, {1.0}, 8);
    TransformerConfig cfg;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_bins = 3;
    cfg.n_epochs = 3;
    cfg.dropout = 0.7;
    CHECK_THROWS_AS(train(ds, cfg), Error);
    cfg.dropout = 0.2;
    const auto m = train(ds, cfg).model;
    const auto back = transformer_from_json(transformer_to_json(m));
    CHECK(back.predict_risk(ds.features) == m.predict_risk(ds.features));
    CHECK(transformer_to_json(back) == transformer_to_json(m));
  }
}
