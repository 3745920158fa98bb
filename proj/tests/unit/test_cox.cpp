#include <doctest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "survbench/cox.hpp"
#include "survbench/harness.hpp"

using namespace survbench;

namespace {

SurvivalDataset random_instance(std::mt19937_64& rng, int n, int p) {
  std::normal_distribution<double> z;
  SurvivalDataset ds;
  ds.features.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) ds.features(i, j) = z(rng);
  }
  for (int j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.time.resize(n);
  ds.event.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.time[i] = static_cast<double>(1 + rng() % 6);  // plenty of ties
    ds.event[static_cast<std::size_t>(i)] = rng() % 4 != 0;
  }
  ds.event[0] = 1;
  return ds;
}

SyntheticData weibull(std::size_t n, std::vector<double> beta, double censor, std::uint64_t seed) {
  SynthSpec s;
  s.n_rows = n;
  s.n_features = beta.size();
  s.beta = std::move(beta);
  s.censor_rate = censor;
  s.seed = seed;
  return generate_synthetic(s);
}

}  // namespace

TEST_SUITE("cox") {
  TEST_CASE("partial likelihood at beta = 0") {
    SurvivalDataset ds;
    ds.features = MatrixXd{{1.0}, {0.0}};
    ds.feature_names = {"x"};
    ds.time = VectorXd{{1.0, 2.0}};
    ds.event = {1, 0};
    CHECK(partial_log_likelihood(VectorXd::Zero(1), ds) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

    // Distinct times, all events: risk sets n, n-1, ..., 1.
    SurvivalDataset d2;
    d2.features = MatrixXd::Random(5, 2);
    d2.feature_names = {"a", "b"};
    d2.time = VectorXd{{5, 1, 4, 2, 3}};
    d2.event = {1, 1, 1, 1, 1};
    double expected = 0.0;
    for (int s = 1; s <= 5; ++s) expected -= std::log(static_cast<double>(s));
    CHECK(partial_log_likelihood(VectorXd::Zero(2), d2) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("partial likelihood matches direct evaluation") {
    SurvivalDataset ds;
    ds.features = MatrixXd{{0.5, -1.0}, {1.5, 0.2}, {-0.3, 0.7}, {2.0, -0.4}};
    ds.feature_names = {"a", "b"};
    ds.time = VectorXd{{3, 1, 4, 2}};
    ds.event = {1, 1, 0, 1};
    const VectorXd beta{{0.4, -0.9}};
    const VectorXd eta = ds.features * beta;
    CHECK(partial_log_likelihood(beta, ds) ==
          doctest::Approx(oracle::breslow_pll(eta, ds.time, ds.event)).epsilon(1e-13));
  }

  TEST_CASE("gradient and Hessian against finite differences") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
      const int n = 4 + static_cast<int>(rng() % 17);
      const int p = 1 + static_cast<int>(rng() % 3);
      const auto ds = random_instance(rng, n, p);
      std::normal_distribution<double> z(0.0, 0.5);
      VectorXd beta(p);
      for (int j = 0; j < p; ++j) beta[j] = z(rng);
      const auto d = partial_log_likelihood_derivatives(beta, ds.features, ds.time, ds.event);
      auto f = [&](const VectorXd& b) { return oracle::breslow_pll(ds.features * b, ds.time, ds.event); };
      auto g = [&](const VectorXd& b) {
        return partial_log_likelihood_derivatives(b, ds.features, ds.time, ds.event, false).gradient;
      };
      CHECK(d.log_likelihood == doctest::Approx(f(beta)).epsilon(1e-12));
      CHECK(oracle::rel_error(d.gradient, oracle::central_gradient(f, beta, 1e-5)) < 1e-4);
      CHECK(oracle::rel_error(d.hessian, oracle::central_hessian(g, beta, 1e-5)) < 1e-4);
    }
  }

  TEST_CASE("recovers beta on Weibull data") {
    const auto data = weibull(2000, {1.0, -0.5}, 0.2, 7);
    const auto m = fit_cox(data.dataset);
    CHECK(m.converged);
    CHECK(std::abs(m.beta[0] - 1.0) < 0.1);
    CHECK(std::abs(m.beta[1] + 0.5) < 0.1);
    CHECK(partial_log_likelihood(m.beta, data.dataset) >= partial_log_likelihood(VectorXd::Zero(2), data.dataset));
  }

  TEST_CASE("null feature stays near zero") {
    const auto data = weibull(500, {0.0}, 0.3, 3);
    CHECK(std::abs(fit_cox(data.dataset).beta[0]) < 0.15);
  }

  TEST_CASE("row permutation and time shift leave beta unchanged") {
    const auto data = weibull(300, {0.7, -0.3, 0.2}, 0.3, 9);
    const auto base = fit_cox(data.dataset).beta;
    std::vector<std::size_t> perm(300);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    CHECK((fit_cox(data.dataset.subset_rows(perm)).beta - base).cwiseAbs().maxCoeff() < 1e-8);
    auto shifted = data.dataset;
    shifted.time.array() += 17.0;
    CHECK((fit_cox(shifted).beta - base).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("degenerate inputs") {
    auto data = weibull(100, {0.5, 0.0}, 0.2, 1);
    auto dup = data.dataset;
    dup.features.col(1) = dup.features.col(0);
    try {
      const auto m = fit_cox(dup);
      CHECK_FALSE(m.converged);
    } catch (const Error& e) {
      CHECK(e.code() == "collinear_features");
    }
    auto constant = data.dataset;
    constant.features.col(1).setConstant(3.0);
    CHECK_THROWS_AS(fit_cox(constant), Error);

    // Perfect separation: the earlier a row fails the larger its feature.
    SurvivalDataset sep;
    sep.features.resize(20, 1);
    sep.time.resize(20);
    for (int i = 0; i < 20; ++i) {
      sep.features(i, 0) = 20 - i;
      sep.time[i] = i + 1;
    }
    sep.feature_names = {"x"};
    sep.event.assign(20, 1);
    try {
      fit_cox(sep);
      FAIL("expected separation");
    } catch (const Error& e) {
      CHECK(e.code() == "separation");
    }
  }

  TEST_CASE("prediction") {
    CoxModel m;
    m.beta = VectorXd{{2.0}};
    CHECK(m.predict_risk(VectorXd{{3.0}}) == 6.0);
    m.beta = VectorXd::Zero(3);
    CHECK(m.predict_risk(MatrixXd(MatrixXd::Random(4, 3))).isZero(0.0));
    m.beta = VectorXd{{0.3, -1.2}};
    const MatrixXd x = MatrixXd::Random(100, 2);
    const VectorXd r = m.predict_risk(x);
    const VectorXd h = (x * m.beta).array().exp();
    for (int i = 1; i < 100; ++i) CHECK((r[i] < r[i - 1]) == (h[i] < h[i - 1]));
  }

  TEST_CASE("json round trip") {
    const auto data = weibull(200, {0.5, -0.5}, 0.2, 2);
    const auto m = fit_cox(data.dataset);
    const auto back = cox_from_json(cox_to_json(m));
    CHECK(back.beta == m.beta);
    CHECK(back.feature_names == m.feature_names);
  }
}
