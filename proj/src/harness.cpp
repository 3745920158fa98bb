#include "survbench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "survbench/boost.hpp"
#include "survbench/concordance.hpp"
#include "survbench/cox.hpp"
#include "survbench/relieff.hpp"
#include "survbench/transformer.hpp"

namespace survbench {

// ---------------------------------------------------------------------------
// Synthetic data

void SynthSpec::validate() const {
  if (n_rows < 2 || n_features < 1) throw Error("invalid_synth", "synthetic data needs n >= 2 and p >= 1");
  if (beta.size() > n_features) throw Error("invalid_synth", "beta is longer than n_features");
  if (!(weibull_shape > 0.0) || !(weibull_scale > 0.0)) {
    throw Error("invalid_synth", "Weibull shape and scale must be positive");
  }
  if (!(censor_rate >= 0.0 && censor_rate < 1.0)) {
    throw Error("invalid_synth", "censor_rate must lie in [0, 1)");
  }
  if (nonlinear && n_features < 2) throw Error("invalid_synth", "interaction term needs p >= 2");
}

SynthSpec default_synth_spec() {
  SynthSpec spec;
  spec.beta = {1.0, -0.8, 0.6, -0.5, 0.4};
  return spec;
}

SyntheticData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n_rows);
  const auto p = static_cast<Eigen::Index>(spec.n_features);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  SyntheticData out;
  auto& ds = out.dataset;
  ds.features.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) ds.features(i, j) = normal(rng);
  }
  for (Eigen::Index j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  VectorXd beta = VectorXd::Zero(p);
  for (std::size_t j = 0; j < spec.beta.size(); ++j) beta[static_cast<Eigen::Index>(j)] = spec.beta[j];
  out.true_eta = ds.features * beta;
  if (spec.nonlinear) out.true_eta += ds.features.col(0).cwiseProduct(ds.features.col(1));

  VectorXd event_time(n);
  VectorXd unit_censor(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = 1.0 - unif(rng);  // (0, 1]
    event_time[i] = std::pow(-std::log(u) / (spec.weibull_scale * std::exp(out.true_eta[i])),
                             1.0 / spec.weibull_shape);
    unit_censor[i] = expo(rng);
  }

  // Censoring time C = E / rate with E ~ Exp(1) fixed, so the censored
  // fraction is monotone in the rate.
  auto censored_fraction = [&](double rate) {
    if (rate <= 0.0) return 0.0;
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < n; ++i) c += unit_censor[i] / rate < event_time[i] ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(n);
  };
  double rate = 0.0;
  if (spec.censor_rate > 0.0) {
    double lo = 0.0;
    double hi = 1.0 / std::max(event_time.mean(), 1e-300);
    for (int i = 0; i < 200 && censored_fraction(hi) < spec.censor_rate; ++i) hi *= 2.0;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (lo + hi);
      (censored_fraction(mid) < spec.censor_rate ? lo : hi) = mid;
    }
    rate = std::abs(censored_fraction(lo) - spec.censor_rate) <=
                   std::abs(censored_fraction(hi) - spec.censor_rate)
               ? lo
               : hi;
    if (std::abs(censored_fraction(rate) - spec.censor_rate) > 0.02) {
      throw Error("censor_calibration", "could not calibrate censoring to " +
                                            std::to_string(spec.censor_rate));
    }
  }
  out.censor_hazard = rate;
  out.censored_fraction = censored_fraction(rate);

  ds.time.resize(n);
  ds.event.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = rate > 0.0 ? unit_censor[i] / rate : std::numeric_limits<double>::infinity();
    const bool observed = event_time[i] <= c;
    ds.time[i] = observed ? event_time[i] : c;
    ds.event[static_cast<std::size_t>(i)] = observed ? 1 : 0;
  }
  ds.validate();
  return out;
}

nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"n_rows", s.n_rows},
          {"n_features", s.n_features},
          {"beta", s.beta},
          {"weibull_shape", s.weibull_shape},
          {"weibull_scale", s.weibull_scale},
          {"censor_rate", s.censor_rate},
          {"nonlinear", s.nonlinear},
          {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s = default_synth_spec();
  s.n_rows = j.value("n_rows", s.n_rows);
  s.n_features = j.value("n_features", s.n_features);
  s.beta = j.value("beta", s.beta);
  s.weibull_shape = j.value("weibull_shape", s.weibull_shape);
  s.weibull_scale = j.value("weibull_scale", s.weibull_scale);
  s.censor_rate = j.value("censor_rate", s.censor_rate);
  s.nonlinear = j.value("nonlinear", s.nonlinear);
  s.seed = j.value("seed", s.seed);
  return s;
}

// ---------------------------------------------------------------------------
// Models

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCox:
      return "cox";
    case ModelKind::kSxgb:
      return "sxgb";
    case ModelKind::kStran:
      return "stran";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "cox") return ModelKind::kCox;
  if (name == "sxgb") return ModelKind::kSxgb;
  if (name == "stran") return ModelKind::kStran;
  throw Error("invalid_model", "unknown model: " + name + " (expected cox, sxgb or stran)");
}

ParamSpace reference_space(ModelKind kind) {
  switch (kind) {
    case ModelKind::kCox:
      return ParamSpace{};
    case ModelKind::kSxgb:
      return ParamSpace({{"eta", DimKind::kLogContinuous, 1e-6, 0.1},
                         {"max_depth", DimKind::kInteger, 1, 5},
                         {"subsample", DimKind::kContinuous, 0.5, 0.9},
                         {"colsample_bytree", DimKind::kContinuous, 0.1, 0.9},
                         {"gamma", DimKind::kLogContinuous, 1e-4, 0.1},
                         {"min_child_weight", DimKind::kLogContinuous, 1e-8, 1e-4},
                         {"alpha", DimKind::kContinuous, 0.0, 1.0},
                         {"lambda", DimKind::kContinuous, 0.0, 20.0}});
    case ModelKind::kStran:
      return ParamSpace({{"n_layers", DimKind::kInteger, 1, 10},
                         {"d_ffn", DimKind::kInteger, 1, 10},
                         {"dropout", DimKind::kContinuous, 0.1, 0.5},
                         {"learning_rate", DimKind::kLogContinuous, 1e-6, 0.01},
                         {"reg_weight", DimKind::kContinuous, 0.1, 3.0},
                         {"n_epochs", DimKind::kInteger, 1, 500}});
  }
  return ParamSpace{};
}

ModelSetup default_setup(ModelKind kind) {
  ModelSetup s;
  s.kind = kind;
  s.space = reference_space(kind);
  if (kind == ModelKind::kSxgb) s.fixed = {{"n_rounds", 200}};
  if (kind == ModelKind::kStran) {
    s.fixed = {{"n_heads", 2}, {"d_model", 32}, {"n_bins", 10}, {"batch_size", 32}};
  }
  return s;
}

std::vector<std::string> outside_reference_box(ModelKind kind, const ParamSpace& space) {
  const auto ref = reference_space(kind);
  std::vector<std::string> bad;
  for (const auto& d : space.dims()) {
    const auto it = std::find_if(ref.dims().begin(), ref.dims().end(),
                                 [&](const ParamDim& p) { return p.name == d.name; });
    if (it == ref.dims().end() || d.lower < it->lower || d.upper > it->upper) bad.push_back(d.name);
  }
  return bad;
}

ParamMap merge_params(const ModelSetup& setup, const std::vector<double>& tuned) {
  ParamMap out = setup.fixed;
  for (std::size_t i = 0; i < setup.space.size() && i < tuned.size(); ++i) {
    out[setup.space.dims()[i].name] = tuned[i];
  }
  return out;
}

namespace {

double get(const ParamMap& m, const std::string& key, double fallback) {
  const auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

int get_int(const ParamMap& m, const std::string& key, int fallback) {
  return static_cast<int>(std::lround(get(m, key, fallback)));
}

BoostHyperparams boost_params(const ParamMap& m) {
  BoostHyperparams hp;
  hp.eta = get(m, "eta", hp.eta);
  hp.max_depth = get_int(m, "max_depth", hp.max_depth);
  hp.subsample = get(m, "subsample", hp.subsample);
  hp.colsample_bytree = get(m, "colsample_bytree", hp.colsample_bytree);
  hp.gamma = get(m, "gamma", hp.gamma);
  hp.min_child_weight = get(m, "min_child_weight", hp.min_child_weight);
  hp.alpha = get(m, "alpha", hp.alpha);
  hp.lambda = get(m, "lambda", hp.lambda);
  hp.n_rounds = get_int(m, "n_rounds", hp.n_rounds);
  return hp;
}

TransformerConfig transformer_config(const ParamMap& m, std::uint64_t seed) {
  TransformerConfig c;
  c.n_layers = get_int(m, "n_layers", c.n_layers);
  c.d_ffn = get_int(m, "d_ffn", c.d_ffn);
  c.n_heads = get_int(m, "n_heads", c.n_heads);
  c.d_model = get_int(m, "d_model", c.d_model);
  c.dropout = get(m, "dropout", c.dropout);
  c.learning_rate = get(m, "learning_rate", c.learning_rate);
  c.reg_weight = get(m, "reg_weight", c.reg_weight);
  c.n_epochs = get_int(m, "n_epochs", c.n_epochs);
  c.n_bins = get_int(m, "n_bins", c.n_bins);
  c.batch_size = get_int(m, "batch_size", c.batch_size);
  c.seed = seed;
  return c;
}

class CoxFitted final : public FittedModel {
 public:
  explicit CoxFitted(CoxModel m) : model_(std::move(m)) {}
  VectorXd predict_risk(const MatrixXd& x) const override { return model_.predict_risk(x); }
  std::string to_json() const override { return cox_to_json(model_); }

 private:
  CoxModel model_;
};

class BoostFitted final : public FittedModel {
 public:
  explicit BoostFitted(TreeEnsemble e) : model_(std::move(e)) {}
  VectorXd predict_risk(const MatrixXd& x) const override { return model_.predict_risk(x); }
  std::string to_json() const override { return ensemble_to_json(model_); }

 private:
  TreeEnsemble model_;
};

class TransformerFitted final : public FittedModel {
 public:
  explicit TransformerFitted(SurvivalTransformer t) : model_(std::move(t)) {}
  VectorXd predict_risk(const MatrixXd& x) const override { return model_.predict_risk(x); }
  std::string to_json() const override { return transformer_to_json(model_); }

 private:
  SurvivalTransformer model_;
};

}  // namespace

std::unique_ptr<FittedModel> fit_model(ModelKind kind, const SurvivalDataset& data,
                                       const ParamMap& params, std::uint64_t seed,
                                       bool allow_out_of_box) {
  switch (kind) {
    case ModelKind::kCox:
      return std::make_unique<CoxFitted>(fit_cox(data));
    case ModelKind::kSxgb: {
      BoostFitOptions opts;
      opts.out_of_box = allow_out_of_box ? OutOfBoxPolicy::kAllow : OutOfBoxPolicy::kClamp;
      return std::make_unique<BoostFitted>(fit_sxgb(data, boost_params(params), seed, opts));
    }
    case ModelKind::kStran: {
      TrainOptions opts;
      opts.allow_out_of_box = allow_out_of_box;
      return std::make_unique<TransformerFitted>(
          train(data, transformer_config(params, seed), opts).model);
    }
  }
  throw Error("invalid_model", "unknown model kind");
}

std::unique_ptr<FittedModel> load_model(const std::string& json_text) {
  const auto doc = nlohmann::json::parse(json_text);
  const auto kind = parse_model_kind(doc.at("model").get<std::string>());
  switch (kind) {
    case ModelKind::kCox:
      return std::make_unique<CoxFitted>(cox_from_json(json_text));
    case ModelKind::kSxgb:
      return std::make_unique<BoostFitted>(ensemble_from_json(json_text));
    case ModelKind::kStran:
      return std::make_unique<TransformerFitted>(transformer_from_json(json_text));
  }
  throw Error("invalid_model", "unknown model kind");
}

// ---------------------------------------------------------------------------
// Nested CV

std::string to_string(SelectStage stage) {
  switch (stage) {
    case SelectStage::kNone:
      return "none";
    case SelectStage::kPreCv:
      return "pre-cv";
    case SelectStage::kPerFold:
      return "per-fold";
  }
  return "unknown";
}

SelectStage parse_select_stage(const std::string& name) {
  if (name == "none") return SelectStage::kNone;
  if (name == "pre-cv") return SelectStage::kPreCv;
  if (name == "per-fold") return SelectStage::kPerFold;
  throw Error("invalid_argument", "unknown selection stage: " + name);
}

namespace {

std::vector<std::size_t> kept_columns(const FeatureWeights& w, std::size_t top) {
  auto cols = top_m(w, std::min<std::size_t>(top, static_cast<std::size_t>(w.weights.size())));
  std::sort(cols.begin(), cols.end());
  return cols;
}

}  // namespace

SurvivalDataset select_features(const SurvivalDataset& ds, const SelectionOptions& options,
                                std::uint64_t seed, std::vector<double>* weights) {
  const auto w = relieff_weights(ds.features, ds.event, options.k_neighbors, seed);
  if (weights) weights->assign(w.weights.data(), w.weights.data() + w.weights.size());
  return ds.subset_features(kept_columns(w, options.top));
}

namespace {

double score(const FittedModel& model, const SurvivalDataset& test) {
  return concordance_index(model.predict_risk(test.features), test.time, test.event).c_index;
}

}  // namespace

NestedCvResult nested_cv(const SurvivalDataset& ds, const ModelSetup& setup,
                         const HarnessOptions& options, std::uint64_t seed) {
  ds.validate();
  if (options.bayes_rounds < 1) throw Error("invalid_argument", "bayes_rounds must be at least 1");
  const auto outer = stratified_kfold(ds, options.outer_k, seed);
  NestedCvResult result;
  for (int f = 0; f < options.outer_k; ++f) {
    FoldResult fr;
    fr.fold = f;
    fr.test_rows = outer.test_rows(f);
    const auto train_rows = outer.train_rows(f);
    SurvivalDataset train = ds.subset_rows(train_rows);
    SurvivalDataset test = ds.subset_rows(fr.test_rows);
    try {
      if (options.selection.stage == SelectStage::kPerFold) {
        const auto w = relieff_weights(train.features, train.event, options.selection.k_neighbors,
                                       derive_seed(seed, 500 + static_cast<std::uint64_t>(f)));
        const auto cols = kept_columns(w, options.selection.top);
        train = train.subset_features(cols);
        test = test.subset_features(cols);
      }
      fr.selected_features = train.feature_names;

      ParamMap params = setup.fixed;
      if (setup.space.size() > 0) {
        const auto inner = stratified_kfold(train, options.inner_k,
                                            derive_seed(seed, 100 + static_cast<std::uint64_t>(f)));
        std::vector<std::pair<SurvivalDataset, SurvivalDataset>> inner_splits;
        for (int j = 0; j < options.inner_k; ++j) {
          inner_splits.emplace_back(train.subset_rows(inner.train_rows(j)),
                                    train.subset_rows(inner.test_rows(j)));
        }
        const auto fit_seed = derive_seed(seed, 400 + static_cast<std::uint64_t>(f));
        Objective objective = [&](const std::vector<double>& tuned) {
          ++fr.n_inner_evals;
          const ParamMap p = merge_params(setup, tuned);
          double sum = 0.0;
          try {
            for (const auto& [tr, va] : inner_splits) {
              sum += score(*fit_model(setup.kind, tr, p, fit_seed, options.allow_out_of_box), va);
            }
          } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
          }
          return sum / static_cast<double>(inner_splits.size());
        };
        const auto opt = optimize(objective, setup.space, options.bayes_rounds,
                                  derive_seed(seed, 200 + static_cast<std::uint64_t>(f)));
        params = merge_params(setup, opt.best_params);
        fr.inner_best = opt.best_objective;
      }
      fr.tuned = params;
      const auto model = fit_model(setup.kind, train, params,
                                   derive_seed(seed, 300 + static_cast<std::uint64_t>(f)),
                                   options.allow_out_of_box);
      fr.c_index = score(*model, test);
    } catch (const Error& e) {
      throw Error(e.code(), "outer fold " + std::to_string(f) + ": " + e.what());
    }
    result.folds.push_back(std::move(fr));
  }
  double sum = 0.0;
  for (const auto& fr : result.folds) sum += fr.c_index;
  result.mean_c_index = sum / static_cast<double>(result.folds.size());
  return result;
}

std::vector<double> oracle_cv(const SurvivalDataset& ds, const VectorXd& true_eta, int outer_k,
                              std::uint64_t seed) {
  if (true_eta.size() != ds.n_rows()) throw Error("dimension_mismatch", "true_eta length mismatch");
  const auto outer = stratified_kfold(ds, outer_k, seed);
  std::vector<double> out;
  for (int f = 0; f < outer_k; ++f) {
    const auto rows = outer.test_rows(f);
    VectorXd risk(static_cast<Eigen::Index>(rows.size()));
    VectorXd time(static_cast<Eigen::Index>(rows.size()));
    std::vector<int> event(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(rows[i]);
      risk[static_cast<Eigen::Index>(i)] = true_eta[r];
      time[static_cast<Eigen::Index>(i)] = ds.time[r];
      event[i] = ds.event[rows[i]];
    }
    out.push_back(concordance_index(risk, time, event).c_index);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo

const ModelAggregate& ExperimentReport::aggregate(const std::string& model) const {
  for (const auto& a : aggregates) {
    if (a.model == model) return a;
  }
  throw Error("missing_model", "no aggregate for model " + model);
}

bool ExperimentReport::any_failed() const {
  return std::any_of(records.begin(), records.end(), [](const auto& r) { return r.failed; });
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

ExperimentReport monte_carlo(const SurvivalDataset& ds_in, const std::vector<ModelSetup>& models,
                             const MonteCarloOptions& options, const VectorXd* true_eta) {
  if (options.reps < 1) throw Error("invalid_argument", "reps must be at least 1");
  const std::string started = utc_now();
  ExperimentReport report;
  auto& prov = report.provenance;

  SurvivalDataset ds = ds_in;
  if (options.harness.selection.stage == SelectStage::kPreCv) {
    ds = select_features(ds_in, options.harness.selection, derive_seed(options.master_seed, 0xfeedULL));
    prov["selected_features"] = ds.feature_names;
  }

  const std::size_t n_models = models.size() + (true_eta ? 1 : 0);
  const std::size_t n_units = static_cast<std::size_t>(options.reps) * n_models;
  std::vector<RepetitionRecord> records(n_units);

  auto run_unit = [&](std::size_t unit) {
    const int rep = static_cast<int>(unit / n_models);
    const std::size_t m = unit % n_models;
    auto& rec = records[unit];
    rec.repetition = rep;
    rec.seed = derive_seed(options.master_seed, static_cast<std::uint64_t>(rep));
    try {
      if (m == models.size()) {
        rec.model = "oracle";
        rec.fold_c_index = oracle_cv(ds, *true_eta, options.harness.outer_k, rec.seed);
      } else {
        rec.model = to_string(models[m].kind);
        const auto cv = nested_cv(ds, models[m], options.harness, rec.seed);
        for (const auto& fr : cv.folds) {
          rec.fold_c_index.push_back(fr.c_index);
          rec.tuned.push_back(fr.tuned);
        }
      }
      rec.mean_c_index = mean_of(rec.fold_c_index);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.fold_c_index.clear();
    }
  };

  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(n_units)));
  if (jobs == 1) {
    for (std::size_t u = 0; u < n_units; ++u) run_unit(u);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (int j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (std::size_t u = next++; u < n_units; u = next++) run_unit(u);
      });
    }
    for (auto& w : workers) w.join();
  }

  // Records ordered by model then repetition.
  for (std::size_t m = 0; m < n_models; ++m) {
    ModelAggregate agg;
    agg.model = m == models.size() ? "oracle" : to_string(models[m].kind);
    agg.reference = m == models.size();
    std::vector<double> means;
    for (int r = 0; r < options.reps; ++r) {
      auto& rec = records[static_cast<std::size_t>(r) * n_models + m];
      if (rec.failed) {
        ++agg.n_failed;
      } else {
        means.push_back(rec.mean_c_index);
      }
      report.records.push_back(rec);
    }
    agg.n_ok = static_cast<int>(means.size());
    if (!means.empty()) agg.mean = mean_of(means);
    if (means.size() > 1) {
      double ss = 0.0;
      for (double v : means) ss += (v - agg.mean) * (v - agg.mean);
      agg.sd = std::sqrt(ss / static_cast<double>(means.size() - 1));
    }
    agg.single_rep = means.size() == 1;
    report.aggregates.push_back(agg);
  }

  std::vector<std::uint64_t> rep_seeds;
  for (int r = 0; r < options.reps; ++r) {
    rep_seeds.push_back(derive_seed(options.master_seed, static_cast<std::uint64_t>(r)));
  }
  prov["master_seed"] = options.master_seed;
  prov["repetition_seeds"] = rep_seeds;
  prov["reps"] = options.reps;
  prov["outer_k"] = options.harness.outer_k;
  prov["inner_k"] = options.harness.inner_k;
  prov["bayes_rounds"] = options.harness.bayes_rounds;
  prov["select_stage"] = to_string(options.harness.selection.stage);
  prov["n_rows"] = ds.n_rows();
  prov["n_features"] = ds.n_features();
  prov["timestamps"] = {{"started", started}, {"finished", utc_now()}};
  return report;
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json doc;
  doc["metric"] = "mean outer-fold C-index of nested cross-validation";
  auto aggs = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back({{"model", a.model},
                    {"mean", a.mean},
                    {"sd", a.sd},
                    {"n_ok", a.n_ok},
                    {"n_failed", a.n_failed},
                    {"single_rep", a.single_rep},
                    {"reference", a.reference}});
  }
  doc["aggregates"] = std::move(aggs);
  auto reps = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json j = {{"model", r.model},
                        {"repetition", r.repetition},
                        {"seed", r.seed},
                        {"failed", r.failed},
                        {"mean_c_index", r.mean_c_index},
                        {"fold_c_index", r.fold_c_index}};
    if (r.failed) j["error"] = r.error;
    if (!r.tuned.empty()) j["tuned"] = r.tuned;
    reps.push_back(std::move(j));
  }
  doc["repetitions"] = std::move(reps);
  doc["provenance"] = report.provenance;
  return doc;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "model,repetition,fold,c_index\n";
  for (const auto& r : report.records) {
    for (std::size_t f = 0; f < r.fold_c_index.size(); ++f) {
      out << r.model << ',' << r.repetition << ',' << f << ',' << r.fold_c_index[f] << '\n';
    }
  }
  return out.str();
}

std::string report_summary(const ExperimentReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  for (const auto& a : report.aggregates) out << a.model << ' ' << a.mean << " (" << a.sd << ")\n";
  return out.str();
}

}  // namespace survbench
