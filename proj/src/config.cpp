#include "survbench/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace survbench {

namespace {

std::string kind_name(DimKind kind) {
  switch (kind) {
    case DimKind::kContinuous:
      return "continuous";
    case DimKind::kLogContinuous:
      return "log";
    case DimKind::kInteger:
      return "integer";
  }
  return "continuous";
}

}  // namespace

void apply_model_overrides(ModelSetup& setup, const nlohmann::json& overrides) {
  std::vector<ParamDim> dims = setup.space.dims();
  if (overrides.contains("fixed")) {
    for (const auto& [name, value] : overrides.at("fixed").items()) {
      setup.fixed[name] = value.get<double>();
      std::erase_if(dims, [&](const ParamDim& d) { return d.name == name; });
    }
  }
  if (overrides.contains("box")) {
    for (const auto& [name, bounds] : overrides.at("box").items()) {
      if (!bounds.is_array() || bounds.size() != 2) {
        throw Error("invalid_config", "box entry " + name + " must be [lower, upper]");
      }
      const double lo = bounds[0].get<double>();
      const double hi = bounds[1].get<double>();
      if (!(lo <= hi)) throw Error("invalid_config", "box entry " + name + " has lower > upper");
      auto it = std::find_if(dims.begin(), dims.end(), [&](const ParamDim& d) { return d.name == name; });
      if (it == dims.end()) {
        const auto ref = reference_space(setup.kind);
        const auto p = std::find_if(ref.dims().begin(), ref.dims().end(),
                                    [&](const ParamDim& d) { return d.name == name; });
        const DimKind kind = p == ref.dims().end() ? DimKind::kContinuous : p->kind;
        dims.push_back({name, kind, lo, hi});
        setup.fixed.erase(name);
      } else {
        it->lower = lo;
        it->upper = hi;
      }
    }
  }
  setup.space = ParamSpace(std::move(dims));
}

nlohmann::json model_setup_to_json(const ModelSetup& setup) {
  nlohmann::json box = nlohmann::json::object();
  for (const auto& d : setup.space.dims()) box[d.name] = {d.lower, d.upper};
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& d : setup.space.dims()) kinds[d.name] = kind_name(d.kind);
  return {{"name", to_string(setup.kind)}, {"box", box}, {"kinds", kinds}, {"fixed", setup.fixed}};
}

void RunConfig::validate() const {
  if (input.has_value() == synth.has_value()) {
    throw Error("invalid_config", "exactly one of input and synth must be given");
  }
  if (synth) synth->validate();
  if (models.empty()) throw Error("invalid_config", "no models requested");
  if (reps < 1 || jobs < 1) throw Error("invalid_config", "reps and jobs must be at least 1");
  if (harness.outer_k < 2 || harness.inner_k < 2) throw Error("invalid_config", "fold counts must be at least 2");
  if (harness.bayes_rounds < 1) throw Error("invalid_config", "bayes_rounds must be at least 1");
  if (!(preprocess.missing_threshold > 0.0 && preprocess.missing_threshold <= 1.0)) {
    throw Error("invalid_config", "missing_threshold must lie in (0, 1]");
  }
  if (harness.allow_out_of_box) return;
  for (const auto& m : models) {
    auto bad = outside_reference_box(m.kind, m.space);
    const auto ref = reference_space(m.kind);
    for (const auto& [name, value] : m.fixed) {
      for (const auto& d : ref.dims()) {
        if (d.name == name && (value < d.lower || value > d.upper)) bad.push_back(name);
      }
    }
    if (!bad.empty()) {
      std::string names;
      for (const auto& b : bad) names += (names.empty() ? "" : ", ") + b;
      throw Error("out_of_box", to_string(m.kind) + " settings outside the reference ranges: " + names +
                                    " (pass --allow-out-of-box to permit)");
    }
  }
}

MonteCarloOptions RunConfig::monte_carlo_options() const {
  MonteCarloOptions o;
  o.reps = reps;
  o.harness = harness;
  o.harness.selection = selection;
  o.master_seed = master_seed;
  o.jobs = jobs;
  return o;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("input") && !j.at("input").is_null()) c.input = j.at("input").get<std::string>();
  if (j.contains("synth") && !j.at("synth").is_null()) {
    const auto& s = j.at("synth");
    if (s.is_string()) {
      if (s.get<std::string>() != "default") throw Error("invalid_config", "synth must be \"default\" or an object");
      c.synth = default_synth_spec();
    } else {
      c.synth = synth_spec_from_json(s);
    }
  }
  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    c.preprocess.time_col = p.value("time_col", c.preprocess.time_col);
    c.preprocess.event_col = p.value("event_col", c.preprocess.event_col);
    c.preprocess.na_string = p.value("na_string", c.preprocess.na_string);
    c.preprocess.missing_threshold = p.value("missing_threshold", c.preprocess.missing_threshold);
    c.preprocess.knn_k = p.value("knn_k", c.preprocess.knn_k);
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    c.selection.stage = parse_select_stage(s.value("stage", to_string(c.selection.stage)));
    c.selection.k_neighbors = s.value("k", c.selection.k_neighbors);
    c.selection.top = s.value("top", c.selection.top);
  }
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) {
      if (m.is_string()) {
        c.models.push_back(default_setup(parse_model_kind(m.get<std::string>())));
      } else {
        auto setup = default_setup(parse_model_kind(m.at("name").get<std::string>()));
        apply_model_overrides(setup, m);
        c.models.push_back(std::move(setup));
      }
    }
  }
  if (j.contains("harness")) {
    const auto& h = j.at("harness");
    c.reps = h.value("reps", c.reps);
    c.harness.outer_k = h.value("outer_k", c.harness.outer_k);
    c.harness.inner_k = h.value("inner_k", c.harness.inner_k);
    c.harness.bayes_rounds = h.value("bayes_rounds", c.harness.bayes_rounds);
    c.master_seed = h.value("master_seed", c.master_seed);
    c.jobs = h.value("jobs", c.jobs);
  }
  c.harness.allow_out_of_box = j.value("allow_out_of_box", false);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["input"] = c.input ? nlohmann::json(*c.input) : nlohmann::json(nullptr);
  j["synth"] = c.synth ? synth_spec_to_json(*c.synth) : nlohmann::json(nullptr);
  j["preprocess"] = {{"time_col", c.preprocess.time_col},
                     {"event_col", c.preprocess.event_col},
                     {"na_string", c.preprocess.na_string},
                     {"missing_threshold", c.preprocess.missing_threshold},
                     {"knn_k", c.preprocess.knn_k}};
  j["selection"] = {{"stage", to_string(c.selection.stage)},
                    {"k", c.selection.k_neighbors},
                    {"top", c.selection.top}};
  auto models = nlohmann::json::array();
  for (const auto& m : c.models) models.push_back(model_setup_to_json(m));
  j["models"] = std::move(models);
  j["harness"] = {{"reps", c.reps},
                  {"outer_k", c.harness.outer_k},
                  {"inner_k", c.harness.inner_k},
                  {"bayes_rounds", c.harness.bayes_rounds},
                  {"master_seed", c.master_seed}};
  j["allow_out_of_box"] = c.harness.allow_out_of_box;
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing_file", "cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid_config", path + ": " + e.what());
  }
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// jobs and out_dir do not affect results and stay out of the hash.
std::string config_hash(const RunConfig& config) { return hash_text(config_to_json(config).dump()); }

PreprocessResult preprocess_file(const std::string& path, const PreprocessOptions& options) {
  CsvOptions csv;
  csv.na_string = options.na_string;
  Diagnostics diag;
  PreprocessResult out;
  const RawTable raw = load_csv(path, options.time_col, options.event_col, csv);
  const RawTable outcomes = drop_missing_outcomes(raw, &diag);
  out.rows_dropped = raw.n_rows() - outcomes.n_rows();
  const RawTable kept = drop_high_missingness(outcomes, options.missing_threshold, &out.dropped_columns);
  const RawTable encoded = dummy_encode(kept, &diag);
  ImputeSummary summary;
  const RawTable imputed = knn_impute(encoded, options.knn_k, &diag, &summary);
  out.cells_imputed = summary.cells_imputed;
  out.dataset = to_survival_dataset(imputed);
  out.warnings = diag.warnings;
  return out;
}

}  // namespace survbench
