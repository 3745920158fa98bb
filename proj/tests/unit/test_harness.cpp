#include <doctest.h>

#include <regex>
#include <set>

#include "survbench/concordance.hpp"
#include "survbench/config.hpp"
#include "survbench/harness.hpp"

using namespace survbench;

namespace {

SynthSpec spec(std::size_t n, std::size_t p, std::vector<double> beta, double censor, std::uint64_t seed) {
  SynthSpec s;
  s.n_rows = n;
  s.n_features = p;
  s.beta = std::move(beta);
  s.censor_rate = censor;
  s.seed = seed;
  return s;
}

ModelSetup quick_sxgb() {
  auto s = default_setup(ModelKind::kSxgb);
  s.fixed["n_rounds"] = 15;
  return s;
}

HarnessOptions quick_options(int rounds) {
  HarnessOptions o;
  o.bayes_rounds = rounds;
  o.selection.stage = SelectStage::kNone;
  return o;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("synthetic generator") {
    const auto none = generate_synthetic(spec(300, 3, {1.0}, 0.0, 1));
    CHECK(std::all_of(none.dataset.event.begin(), none.dataset.event.end(), [](int e) { return e == 1; }));

    for (double c : {0.1, 0.3, 0.6}) {
      const auto d = generate_synthetic(spec(500, 4, {1.0, -1.0}, c, 2));
      const double frac = 1.0 - static_cast<double>(d.dataset.n_events()) / 500.0;
      CHECK(std::abs(frac - c) <= 0.02);
      CHECK(frac == doctest::Approx(d.censored_fraction));
    }

    const auto zero = generate_synthetic(spec(200, 3, {}, 0.3, 3));
    CHECK(concordance_index(zero.true_eta, zero.dataset.time, zero.dataset.event).c_index == 0.5);

    const auto big = generate_synthetic(spec(5000, 4, {1.0, -0.5}, 0.3, 4));
    CHECK(concordance_index(big.true_eta, big.dataset.time, big.dataset.event).c_index > 0.7);

    const auto a = generate_synthetic(spec(100, 5, {1.0}, 0.3, 7));
    const auto b = generate_synthetic(spec(100, 5, {1.0}, 0.3, 7));
    CHECK(to_csv(a.dataset) == to_csv(b.dataset));

    auto nl = spec(200, 3, {0.5}, 0.2, 5);
    nl.nonlinear = true;
    const auto n = generate_synthetic(nl);
    const VectorXd lin = 0.5 * n.dataset.features.col(0);
    CHECK((n.true_eta - lin - n.dataset.features.col(0).cwiseProduct(n.dataset.features.col(1))).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS_AS(generate_synthetic(spec(100, 2, {1.0}, 1.0, 1)), Error);
    auto bad = spec(100, 2, {1.0}, 0.3, 1);
    bad.weibull_shape = 0.0;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
  }

  TEST_CASE("reference boxes") {
    const auto sx = reference_space(ModelKind::kSxgb);
    CHECK(sx.size() == 8);
    CHECK(sx.dims()[sx.index_of("lambda")].upper == 20.0);
    CHECK(reference_space(ModelKind::kStran).size() == 6);
    CHECK(reference_space(ModelKind::kCox).size() == 0);
    ParamSpace wide({{"eta", DimKind::kLogContinuous, 1e-6, 0.5}, {"max_depth", DimKind::kInteger, 1, 3}});
    CHECK(outside_reference_box(ModelKind::kSxgb, wide) == std::vector<std::string>{"eta"});
  }

  TEST_CASE("nested cv for cox is deterministic and scores every row once") {
    const auto data = generate_synthetic(default_synth_spec());
    const auto a = nested_cv(data.dataset, default_setup(ModelKind::kCox), quick_options(1), 11);
    const auto b = nested_cv(data.dataset, default_setup(ModelKind::kCox), quick_options(1), 11);
    REQUIRE(a.folds.size() == 5);
    std::vector<int> seen(500, 0);
    for (std::size_t f = 0; f < 5; ++f) {
      CHECK(a.folds[f].c_index == b.folds[f].c_index);
      CHECK(a.folds[f].n_inner_evals == 0);
      for (auto r : a.folds[f].test_rows) ++seen[r];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

    const auto oracle = oracle_cv(data.dataset, data.true_eta, 5, 11);
    double om = 0.0;
    for (double c : oracle) om += c / 5.0;
    CHECK(std::abs(a.mean_c_index - om) <= 0.03);
  }

  TEST_CASE("one optimizer round means one inner evaluation per fold") {
    const auto data = generate_synthetic(spec(150, 4, {1.0, -0.5}, 0.3, 9));
    for (auto setup : {quick_sxgb()}) {
      const auto r = nested_cv(data.dataset, setup, quick_options(1), 3);
      for (const auto& f : r.folds) CHECK(f.n_inner_evals == 1);
    }
    auto st = default_setup(ModelKind::kStran);
    st.fixed = {{"d_model", 4}, {"n_heads", 2}, {"n_bins", 3}, {"batch_size", 32}, {"n_epochs", 2}, {"n_layers", 1}};
    st.space = ParamSpace({{"learning_rate", DimKind::kLogContinuous, 1e-3, 1e-2}});
    const auto r = nested_cv(data.dataset, st, quick_options(1), 3);
    for (const auto& f : r.folds) CHECK(f.n_inner_evals == 1);
  }

  TEST_CASE("held-out rows never influence tuning") {
    const auto data = generate_synthetic(spec(150, 5, {1.0, -0.5}, 0.3, 10));
    for (auto stage : {SelectStage::kNone, SelectStage::kPerFold}) {
      auto opts = quick_options(6);
      opts.selection.stage = stage;
      opts.selection.top = 3;
      const auto base = nested_cv(data.dataset, quick_sxgb(), opts, 21);
      const auto folds = stratified_kfold(data.dataset, 5, 21);
      for (int f = 0; f < 5; ++f) {
        auto perturbed = data.dataset;
        for (auto r : folds.test_rows(f)) {
          const auto i = static_cast<Eigen::Index>(r);
          perturbed.features.row(i) *= -3.0;
          perturbed.time[i] *= 5.0;
        }
        const auto again = nested_cv(perturbed, quick_sxgb(), opts, 21);
        CHECK(again.folds[static_cast<std::size_t>(f)].tuned == base.folds[static_cast<std::size_t>(f)].tuned);
        CHECK(again.folds[static_cast<std::size_t>(f)].selected_features ==
              base.folds[static_cast<std::size_t>(f)].selected_features);
      }
    }
  }

  TEST_CASE("monte carlo aggregation") {
    const auto data = generate_synthetic(spec(200, 4, {1.0, -0.5}, 0.3, 12));
    MonteCarloOptions mc;
    mc.reps = 4;
    mc.harness = quick_options(1);
    mc.master_seed = 5;
    const auto rep = monte_carlo(data.dataset, {default_setup(ModelKind::kCox)}, mc, &data.true_eta);
    const auto& cox = rep.aggregate("cox");
    CHECK(cox.n_ok == 4);
    double mean = 0.0;
    std::set<double> distinct;
    for (const auto& r : rep.records) {
      if (r.model != "cox") continue;
      mean += r.mean_c_index / 4.0;
      distinct.insert(r.mean_c_index);
      CHECK(r.mean_c_index >= 0.0);
      CHECK(r.mean_c_index <= 1.0);
    }
    CHECK(std::abs(cox.mean - mean) < 1e-12);
    CHECK(cox.sd >= 0.0);
    CHECK(cox.sd < 0.1);
    CHECK(distinct.size() > 1);
    CHECK(rep.aggregate("oracle").reference);

    mc.jobs = 3;
    const auto par = monte_carlo(data.dataset, {default_setup(ModelKind::kCox)}, mc, &data.true_eta);
    auto strip = [](nlohmann::json j) {
      j["provenance"].erase("timestamps");
      return j.dump();
    };
    CHECK(strip(report_to_json(par)) == strip(report_to_json(rep)));

    mc.reps = 1;
    const auto one = monte_carlo(data.dataset, {default_setup(ModelKind::kCox)}, mc);
    CHECK(one.aggregate("cox").sd == 0.0);
    CHECK(one.aggregate("cox").single_rep);
  }

  TEST_CASE("failed repetitions are counted and excluded") {
    const auto data = generate_synthetic(spec(120, 3, {1.0}, 0.3, 13));
    auto broken = default_setup(ModelKind::kStran);
    broken.fixed["d_model"] = 3;  // not divisible by two heads
    MonteCarloOptions mc;
    mc.reps = 2;
    mc.harness = quick_options(1);
    const auto rep = monte_carlo(data.dataset, {default_setup(ModelKind::kCox), broken}, mc);
    CHECK(rep.any_failed());
    CHECK(rep.aggregate("stran").n_failed == 2);
    CHECK(rep.aggregate("stran").n_ok == 0);
    CHECK(rep.aggregate("cox").n_ok == 2);
  }

  TEST_CASE("report formats") {
    ExperimentReport rep;
    rep.aggregates.push_back({"cox", 0.71234, 0.01449, 3, 0, false, false});
    rep.records.push_back({"cox", 0, 1, false, "", 0.7, {0.6, 0.8}, {}});
    CHECK(report_summary(rep) == "cox 0.7123 (0.0145)\n");
    CHECK(report_to_csv(rep) == "model,repetition,fold,c_index\ncox,0,0,0.59999999999999998\ncox,0,1,0.80000000000000004\n");
  }

  TEST_CASE("run config") {
    const auto cfg = config_from_json(nlohmann::json::parse(R"({
      "synth": "default",
      "models": ["cox", {"name": "stran", "box": {"n_layers": [1, 2]}, "fixed": {"d_model": 8, "n_epochs": 20}}],
      "harness": {"reps": 3, "master_seed": 9}
    })"));
    cfg.validate();
    CHECK(cfg.models.size() == 2);
    const auto& st = cfg.models[1];
    CHECK(st.space.dims()[st.space.index_of("n_layers")].upper == 2);
    CHECK(st.fixed.at("n_epochs") == 20);
    CHECK(st.space.size() == 5);
    CHECK(config_hash(cfg) == config_hash(config_from_json(config_to_json(cfg))));

    auto wide = config_from_json(nlohmann::json::parse(R"({"synth": "default", "models": [{"name": "sxgb", "box": {"eta": [1e-6, 0.5]}}]})"));
    CHECK_THROWS_AS(wide.validate(), Error);
    wide.harness.allow_out_of_box = true;
    wide.validate();

    auto both = cfg;
    both.input = "x.csv";
    CHECK_THROWS_AS(both.validate(), Error);
  }
}
