#include <doctest.h>

#include <regex>

#include <json.hpp>

#include "process.hpp"
#include "survbench/data.hpp"

using nlohmann::json;
using testproc::run;
using testproc::slurp;
using testproc::spit;

TEST_SUITE("cli") {
  TEST_CASE("synth is reproducible and writes the oracle sidecar") {
    const auto dir = testproc::fresh_dir("cli_synth");
    REQUIRE(run(dir, "synth --n 100 --p 5 --seed 7 --out a.csv").exit_code == 0);
    REQUIRE(run(dir, "synth --n 100 --p 5 --seed 7 --out b.csv").exit_code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(slurp(dir / "a.oracle.json") == slurp(dir / "b.oracle.json"));
    const auto oracle = json::parse(slurp(dir / "a.oracle.json"));
    CHECK(oracle.at("beta").size() == 5);
    CHECK(oracle.contains("config_hash"));

    REQUIRE(run(dir, "preprocess --input a.csv --out clean.csv").exit_code == 0);
    CHECK(slurp(dir / "clean.csv") == slurp(dir / "a.csv"));
    const auto manifest = json::parse(slurp(dir / "clean.manifest.json"));
    CHECK(manifest.at("dropped_columns").empty());
    CHECK(manifest.at("cells_imputed") == 0);
  }

  TEST_CASE("preprocess drops, encodes and imputes") {
    const auto dir = testproc::fresh_dir("cli_pre");
    std::string text = "mostly_missing,g,a,time,event\n";
    for (int i = 0; i < 10; ++i) {
      text += (i < 6 ? "NA" : "1.5") + std::string(",") + (i % 3 == 0 ? "x" : "y") + "," +
              (i == 4 ? "" : std::to_string(i * 0.5)) + "," + std::to_string(i + 1) + "," + std::to_string(i % 2) + "\n";
    }
    spit(dir / "raw.csv", text);
    const auto r = run(dir, "preprocess --input raw.csv --out clean.csv --manifest m.json");
    REQUIRE(r.exit_code == 0);
    const auto manifest = json::parse(slurp(dir / "m.json"));
    CHECK(manifest.at("dropped_columns") == json::array({"mostly_missing"}));
    CHECK(manifest.at("cells_imputed") == 1);
    const auto ds = survbench::to_survival_dataset(survbench::load_csv((dir / "clean.csv").string(), "time", "event"));
    CHECK(ds.features.allFinite());
    CHECK(ds.feature_names == std::vector<std::string>{"g=y", "a"});
  }

  TEST_CASE("structured errors") {
    const auto dir = testproc::fresh_dir("cli_err");
    spit(dir / "bad.csv", "a,time,event\n1,2,2\n");
    const auto r = run(dir, "preprocess --input bad.csv --out x.csv");
    CHECK(r.exit_code != 0);
    const auto line = json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(line.at("error") == "invalid_event");
    CHECK(run(dir, "montecarlo --synth default --models nope --reps 1").exit_code != 0);
    CHECK(run(dir, "frobnicate").exit_code != 0);
  }

  TEST_CASE("train, evaluate and select") {
    const auto dir = testproc::fresh_dir("cli_train");
    REQUIRE(run(dir, "synth --n 150 --p 6 --seed 3 --out d.csv").exit_code == 0);
    REQUIRE(run(dir, "train --input d.csv --model sxgb --param n_rounds=20 --seed 4 --out m.json").exit_code == 0);
    REQUIRE(run(dir, "train --input d.csv --model sxgb --param n_rounds=20 --seed 4 --out m2.json").exit_code == 0);
    CHECK(slurp(dir / "m.json") == slurp(dir / "m2.json"));
    const auto ev = run(dir, "evaluate --input d.csv --model m.json");
    REQUIRE(ev.exit_code == 0);
    const double c = json::parse(ev.out).at("c_index");
    CHECK(c > 0.6);
    CHECK(c <= 1.0);
    CHECK(run(dir, "train --input d.csv --model stran --param dropout=0.9 --param n_epochs=1 --out s.json").exit_code != 0);

    REQUIRE(run(dir, "select-features --input d.csv --k 5 --top 2 --seed 1 --out sel.csv").exit_code == 0);
    const auto sel = survbench::to_survival_dataset(survbench::load_csv((dir / "sel.csv").string(), "time", "event"));
    CHECK(sel.n_features() == 2);
    CHECK(json::parse(slurp(dir / "sel.weights.json")).at("weights").size() == 6);
    CHECK(run(dir, "select-features --input d.csv --top 2 --out sel.csv").exit_code != 0);
  }

  TEST_CASE("montecarlo report, summary and seed fallback") {
    const auto dir = testproc::fresh_dir("cli_mc");
    const auto r = run(dir, "montecarlo --synth default --models cox --reps 2 --out-dir out");
    REQUIRE(r.exit_code == 0);
    const auto report = json::parse(slurp(dir / "out" / "report.json"));
    int cox_reps = 0;
    for (const auto& rep : report.at("repetitions")) cox_reps += rep.at("model") == "cox" ? 1 : 0;
    CHECK(cox_reps == 2);
    CHECK(report.at("provenance").at("timestamps").contains("started"));
    CHECK(report.contains("config_hash"));
    const std::regex line(R"(^(cox|oracle) \d\.\d{4} \(\d\.\d{4}\)$)");
    std::istringstream lines(r.out);
    std::string l;
    int n = 0;
    while (std::getline(lines, l)) {
      CHECK(std::regex_match(l, line));
      ++n;
    }
    CHECK(n == 2);

    const auto e1 = run(dir, "montecarlo --synth default --models cox --reps 1 --out-dir e1", "SURVBENCH_SEED=77");
    const auto e2 = run(dir, "montecarlo --synth default --models cox --reps 1 --out-dir e2 --seed 77");
    REQUIRE(e1.exit_code == 0);
    REQUIRE(e2.exit_code == 0);
    CHECK(json::parse(slurp(dir / "e1" / "report.json")).at("provenance").at("master_seed") == 77);
    CHECK(e1.out == e2.out);
  }
}
