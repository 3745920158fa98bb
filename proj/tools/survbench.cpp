// survbench command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "survbench/concordance.hpp"
#include "survbench/config.hpp"
#include "survbench/harness.hpp"
#include "survbench/relieff.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace survbench;

namespace {

void report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
}

void report_warning(const std::string& message) {
  std::cerr << json{{"warning", message}}.dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io_error", "write failed for " + path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SurvivalDataset load_dataset(const std::string& path, const PreprocessOptions& p) {
  CsvOptions csv;
  csv.na_string = p.na_string;
  auto ds = to_survival_dataset(load_csv(path, p.time_col, p.event_col, csv));
  ds.validate();
  return ds;
}

std::string sidecar(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  p.replace_extension(suffix);
  return p.string();
}

std::uint64_t env_seed() {
  const char* v = std::getenv("SURVBENCH_SEED");
  if (v == nullptr || *v == '\0') return 0;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw Error("invalid_argument", std::string("SURVBENCH_SEED is not an unsigned integer: ") + v);
  }
}

// Flag > config file > SURVBENCH_SEED > 0.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value, const json* config_doc,
                           const char* config_key) {
  if (flag->count() > 0) return flag_value;
  if (config_doc != nullptr && config_doc->contains("harness") &&
      config_doc->at("harness").contains(config_key)) {
    return config_doc->at("harness").at(config_key).get<std::uint64_t>();
  }
  return env_seed();
}

struct PreprocessFlags {
  PreprocessOptions opts;
  std::string input;
  std::string out;
  std::string manifest;
  std::string config;
};

int run_preprocess(const PreprocessFlags& f, const CLI::App& cmd) {
  PreprocessOptions opts;
  if (!f.config.empty()) opts = load_config(f.config).preprocess;
  if (cmd.count("--time-col")) opts.time_col = f.opts.time_col;
  if (cmd.count("--event-col")) opts.event_col = f.opts.event_col;
  if (cmd.count("--na-string")) opts.na_string = f.opts.na_string;
  if (cmd.count("--missing-threshold")) opts.missing_threshold = f.opts.missing_threshold;
  if (cmd.count("--knn-k")) opts.knn_k = f.opts.knn_k;
  if (!(opts.missing_threshold > 0.0 && opts.missing_threshold <= 1.0)) {
    throw Error("invalid_argument", "--missing-threshold must lie in (0, 1]");
  }
  const auto result = preprocess_file(f.input, opts);
  for (const auto& w : result.warnings) report_warning(w);

  const json options_doc = {{"time_col", opts.time_col},
                            {"event_col", opts.event_col},
                            {"na_string", opts.na_string},
                            {"missing_threshold", opts.missing_threshold},
                            {"knn_k", opts.knn_k}};
  const json manifest = {{"input", f.input},
                         {"output", f.out},
                         {"options", options_doc},
                         {"config_hash", hash_text(options_doc.dump())},
                         {"dropped_columns", result.dropped_columns},
                         {"rows_dropped_missing_outcome", result.rows_dropped},
                         {"cells_imputed", result.cells_imputed},
                         {"n_rows", result.dataset.n_rows()},
                         {"n_features", result.dataset.n_features()},
                         {"warnings", result.warnings}};
  write_text(f.out, to_csv(result.dataset, opts.time_col, opts.event_col));
  write_text(f.manifest.empty() ? sidecar(f.out, ".manifest.json") : f.manifest, manifest.dump(2) + "\n");
  return 0;
}

struct SelectFlags {
  std::string input;
  std::string out;
  int k = 10;
  std::size_t top = 200;
  std::uint64_t seed = 0;
  PreprocessOptions opts;
};

int run_select(const SelectFlags& f, const CLI::Option* seed_flag) {
  const auto ds = load_dataset(f.input, f.opts);
  const std::uint64_t seed = resolve_seed(seed_flag, f.seed, nullptr, "");
  const auto w = relieff_weights(ds.features, ds.event, f.k, seed);
  const auto cols = top_m(w, std::min<std::size_t>(f.top, static_cast<std::size_t>(ds.n_features())));
  const auto selected = ds.subset_features(cols);

  json weights = json::object();
  for (Eigen::Index j = 0; j < ds.n_features(); ++j) weights[ds.feature_names[static_cast<std::size_t>(j)]] = w.weights[j];
  const json params = {{"input", f.input}, {"k", f.k}, {"top", f.top}, {"seed", seed}};
  const json doc = {{"params", params},
                    {"config_hash", hash_text(params.dump())},
                    {"selected", selected.feature_names},
                    {"weights", weights}};
  write_text(f.out, to_csv(selected, f.opts.time_col, f.opts.event_col));
  write_text(sidecar(f.out, ".weights.json"), doc.dump(2) + "\n");
  return 0;
}

struct SynthFlags {
  SynthSpec spec = default_synth_spec();
  std::string out;
};

int run_synth(SynthFlags f, const CLI::App& cmd) {
  if (!cmd.count("--beta") && f.spec.beta.size() > f.spec.n_features) f.spec.beta.resize(f.spec.n_features);
  const auto data = generate_synthetic(f.spec);
  VectorXd beta = VectorXd::Zero(static_cast<Eigen::Index>(f.spec.n_features));
  for (std::size_t j = 0; j < f.spec.beta.size(); ++j) beta[static_cast<Eigen::Index>(j)] = f.spec.beta[j];
  const json spec_doc = synth_spec_to_json(f.spec);
  const json oracle = {{"spec", spec_doc},
                       {"config_hash", hash_text(spec_doc.dump())},
                       {"beta", std::vector<double>(beta.data(), beta.data() + beta.size())},
                       {"nonlinear", f.spec.nonlinear},
                       {"censor_hazard", data.censor_hazard},
                       {"censored_fraction", data.censored_fraction}};
  write_text(f.out, to_csv(data.dataset));
  write_text(sidecar(f.out, ".oracle.json"), oracle.dump(2) + "\n");
  return 0;
}

struct TrainFlags {
  std::string input;
  std::string model;
  std::string out;
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  bool allow_out_of_box = false;
  PreprocessOptions opts;
};

int run_train(const TrainFlags& f, const CLI::Option* seed_flag) {
  const auto kind = parse_model_kind(f.model);
  const auto ds = load_dataset(f.input, f.opts);
  auto setup = default_setup(kind);
  ParamMap params = setup.fixed;
  for (const auto& p : f.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw Error("invalid_argument", "--param expects name=value, got " + p);
    try {
      params[p.substr(0, eq)] = std::stod(p.substr(eq + 1));
    } catch (const std::exception&) {
      throw Error("invalid_argument", "--param value is not a number: " + p);
    }
  }
  const std::uint64_t seed = resolve_seed(seed_flag, f.seed, nullptr, "");
  const auto model = fit_model(kind, ds, params, seed, f.allow_out_of_box);
  auto doc = json::parse(model->to_json());
  const json run = {{"input", f.input}, {"model", f.model}, {"params", params}, {"seed", seed}};
  doc["config_hash"] = hash_text(run.dump());
  write_text(f.out, doc.dump() + "\n");
  return 0;
}

struct EvaluateFlags {
  std::string input;
  std::string model;
  std::string out;
  PreprocessOptions opts;
};

int run_evaluate(const EvaluateFlags& f) {
  const auto ds = load_dataset(f.input, f.opts);
  const auto text = read_text(f.model);
  const auto model = load_model(text);
  const auto c = concordance_index(model->predict_risk(ds.features), ds.time, ds.event);
  const json doc = {{"model", f.model},
                    {"input", f.input},
                    {"config_hash", hash_text(text)},
                    {"c_index", c.c_index},
                    {"n_comparable", c.n_comparable},
                    {"n_concordant", c.n_concordant},
                    {"n_discordant", c.n_discordant},
                    {"n_tied_risk", c.n_tied_risk}};
  if (f.out.empty()) {
    std::cout << doc.dump() << '\n';
  } else {
    write_text(f.out, doc.dump(2) + "\n");
  }
  return 0;
}

struct MonteCarloFlags {
  std::string config;
  std::string input;
  std::string synth;
  std::vector<std::string> models;
  int reps = 10;
  int outer_k = 5;
  int inner_k = 3;
  int bayes_rounds = 25;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string select_stage;
  int relief_k = 10;
  std::size_t top = 200;
  std::string out_dir;
  std::string na_string;
  bool allow_out_of_box = false;
};

int run_montecarlo(const MonteCarloFlags& f, const CLI::App& cmd, const CLI::Option* seed_flag) {
  json config_doc = json::object();
  if (!f.config.empty()) {
    try {
      config_doc = json::parse(read_text(f.config));
    } catch (const json::exception& e) {
      throw Error("invalid_config", f.config + ": " + e.what());
    }
  }
  RunConfig cfg = config_from_json(config_doc);
  if (cmd.count("--input")) {
    cfg.input = f.input;
    cfg.synth.reset();
  }
  if (cmd.count("--synth")) {
    cfg.synth = f.synth == "default" ? default_synth_spec() : synth_spec_from_json(json::parse(read_text(f.synth)));
    cfg.input.reset();
  }
  if (cmd.count("--models")) {
    // Models named in the config keep their boxes; others get the defaults.
    std::vector<ModelSetup> chosen;
    for (const auto& m : f.models) {
      const auto kind = parse_model_kind(m);
      const auto it = std::find_if(cfg.models.begin(), cfg.models.end(),
                                   [&](const ModelSetup& s) { return s.kind == kind; });
      chosen.push_back(it == cfg.models.end() ? default_setup(kind) : *it);
    }
    cfg.models = std::move(chosen);
  }
  if (cfg.models.empty()) {
    for (auto k : {ModelKind::kCox, ModelKind::kSxgb, ModelKind::kStran}) cfg.models.push_back(default_setup(k));
  }
  if (cmd.count("--reps")) cfg.reps = f.reps;
  if (cmd.count("--outer-k")) cfg.harness.outer_k = f.outer_k;
  if (cmd.count("--inner-k")) cfg.harness.inner_k = f.inner_k;
  if (cmd.count("--bayes-rounds")) cfg.harness.bayes_rounds = f.bayes_rounds;
  if (cmd.count("--jobs")) cfg.jobs = f.jobs;
  if (cmd.count("--select-stage")) cfg.selection.stage = parse_select_stage(f.select_stage);
  if (cmd.count("--relief-k")) cfg.selection.k_neighbors = f.relief_k;
  if (cmd.count("--top")) cfg.selection.top = f.top;
  if (cmd.count("--out-dir")) cfg.out_dir = f.out_dir;
  if (cmd.count("--na-string")) cfg.preprocess.na_string = f.na_string;
  if (f.allow_out_of_box) cfg.harness.allow_out_of_box = true;
  cfg.master_seed = resolve_seed(seed_flag, f.seed, &config_doc, "master_seed");
  cfg.validate();

  SurvivalDataset ds;
  VectorXd true_eta;
  const VectorXd* oracle = nullptr;
  if (cfg.synth) {
    auto data = generate_synthetic(*cfg.synth);
    ds = std::move(data.dataset);
    true_eta = std::move(data.true_eta);
    oracle = &true_eta;
  } else {
    auto prep = preprocess_file(*cfg.input, cfg.preprocess);
    for (const auto& w : prep.warnings) report_warning(w);
    ds = std::move(prep.dataset);
  }

  const auto report = monte_carlo(ds, cfg.models, cfg.monte_carlo_options(), oracle);
  json doc = report_to_json(report);
  doc["config"] = config_to_json(cfg);
  doc["config_hash"] = config_hash(cfg);
  const fs::path out(cfg.out_dir);
  write_text(out / "report.json", doc.dump(2) + "\n");
  write_text(out / "repetitions.csv", report_to_csv(report));
  std::cout << report_summary(report);

  for (const auto& r : report.records) {
    if (r.failed) {
      report_error("repetition_failed",
                   r.model + " repetition " + std::to_string(r.repetition) + ": " + r.error);
    }
  }
  return report.any_failed() ? 1 : 0;
}

void add_preprocess_io(CLI::App* cmd, PreprocessOptions& opts) {
  cmd->add_option("--time-col", opts.time_col, "Time column name");
  cmd->add_option("--event-col", opts.event_col, "Event column name (0/1)");
  cmd->add_option("--na-string", opts.na_string, "Missing-value sentinel");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival benchmark: preprocessing, models and nested-CV Monte Carlo"};
  app.require_subcommand(1);

  PreprocessFlags pre;
  auto* pre_cmd = app.add_subcommand("preprocess", "Clean, dummy-code and impute a CSV");
  pre_cmd->add_option("--input", pre.input, "Input CSV")->required();
  pre_cmd->add_option("--out", pre.out, "Output CSV")->required();
  pre_cmd->add_option("--manifest", pre.manifest, "Manifest JSON (default: <out>.manifest.json)");
  pre_cmd->add_option("--config", pre.config, "JSON run config");
  pre_cmd->add_option("--missing-threshold", pre.opts.missing_threshold, "Drop columns at or above this missing fraction");
  pre_cmd->add_option("--knn-k", pre.opts.knn_k, "Donors for KNN imputation");
  add_preprocess_io(pre_cmd, pre.opts);

  SelectFlags sel;
  auto* sel_cmd = app.add_subcommand("select-features", "ReliefF feature selection on the event indicator");
  sel_cmd->add_option("--input", sel.input, "Preprocessed CSV")->required();
  sel_cmd->add_option("--out", sel.out, "Output CSV with the selected columns")->required();
  sel_cmd->add_option("--k", sel.k, "Nearest hits/misses per target")->required();
  sel_cmd->add_option("--top", sel.top, "Columns to keep");
  auto* sel_seed = sel_cmd->add_option("--seed", sel.seed, "Seed");
  add_preprocess_io(sel_cmd, sel.opts);

  SynthFlags syn;
  auto* syn_cmd = app.add_subcommand("synth", "Generate Weibull proportional-hazards data");
  syn_cmd->add_option("--n", syn.spec.n_rows, "Rows");
  syn_cmd->add_option("--p", syn.spec.n_features, "Features");
  syn_cmd->add_option("--beta", syn.spec.beta, "Leading coefficients (rest are zero)");
  syn_cmd->add_option("--shape", syn.spec.weibull_shape, "Weibull shape");
  syn_cmd->add_option("--scale", syn.spec.weibull_scale, "Weibull scale");
  syn_cmd->add_option("--censor", syn.spec.censor_rate, "Target censored fraction");
  syn_cmd->add_flag("--nonlinear", syn.spec.nonlinear, "Add an x1*x2 interaction to the risk");
  syn_cmd->add_option("--seed", syn.spec.seed, "Seed");
  syn_cmd->add_option("--out", syn.out, "Output CSV")->required();

  TrainFlags tr;
  auto* tr_cmd = app.add_subcommand("train", "Fit one model and write it as JSON");
  tr_cmd->add_option("--input", tr.input, "Preprocessed CSV")->required();
  tr_cmd->add_option("--model", tr.model, "cox, sxgb or stran")->required();
  tr_cmd->add_option("--param", tr.params, "Hyperparameter name=value (repeatable)");
  auto* tr_seed = tr_cmd->add_option("--seed", tr.seed, "Seed");
  tr_cmd->add_option("--out", tr.out, "Model JSON")->required();
  tr_cmd->add_flag("--allow-out-of-box", tr.allow_out_of_box, "Permit settings outside the reference ranges");
  add_preprocess_io(tr_cmd, tr.opts);

  EvaluateFlags ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "C-index of a saved model on a dataset");
  ev_cmd->add_option("--input", ev.input, "Preprocessed CSV")->required();
  ev_cmd->add_option("--model", ev.model, "Model JSON")->required();
  ev_cmd->add_option("--out", ev.out, "Write the result here instead of stdout");
  add_preprocess_io(ev_cmd, ev.opts);

  MonteCarloFlags mc;
  auto* mc_cmd = app.add_subcommand("montecarlo", "Repeated nested-CV benchmark");
  mc_cmd->add_option("--config", mc.config, "JSON run config");
  mc_cmd->add_option("--input", mc.input, "Raw CSV (preprocessed before use)");
  mc_cmd->add_option("--synth", mc.synth, "\"default\" or a synth spec JSON file");
  mc_cmd->add_option("--models", mc.models, "Models to run")->delimiter(',');
  mc_cmd->add_option("--reps", mc.reps, "Repetitions");
  mc_cmd->add_option("--outer-k", mc.outer_k, "Outer folds");
  mc_cmd->add_option("--inner-k", mc.inner_k, "Inner folds");
  mc_cmd->add_option("--bayes-rounds", mc.bayes_rounds, "Optimizer evaluations per outer fold");
  auto* mc_seed = mc_cmd->add_option("--seed", mc.seed, "Master seed (fallback: SURVBENCH_SEED)");
  mc_cmd->add_option("--jobs", mc.jobs, "Parallel repetitions");
  mc_cmd->add_option("--select-stage", mc.select_stage, "none, pre-cv or per-fold");
  mc_cmd->add_option("--relief-k", mc.relief_k, "ReliefF neighbours");
  mc_cmd->add_option("--top", mc.top, "Features kept by ReliefF");
  mc_cmd->add_option("--out-dir", mc.out_dir, "Directory for report.json and repetitions.csv");
  mc_cmd->add_option("--na-string", mc.na_string, "Missing-value sentinel");
  mc_cmd->add_flag("--allow-out-of-box", mc.allow_out_of_box, "Permit boxes outside the reference ranges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("invalid_argument", e.what());
    return 2;
  }

  try {
    if (*pre_cmd) return run_preprocess(pre, *pre_cmd);
    if (*sel_cmd) return run_select(sel, sel_seed);
    if (*syn_cmd) return run_synth(syn, *syn_cmd);
    if (*tr_cmd) return run_train(tr, tr_seed);
    if (*ev_cmd) return run_evaluate(ev);
    if (*mc_cmd) return run_montecarlo(mc, *mc_cmd, mc_seed);
  } catch (const Error& e) {
    report_error(e.code(), e.what());
    return 1;
  } catch (const json::exception& e) {
    report_error("invalid_json", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 0;
}
