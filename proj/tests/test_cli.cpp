#include <doctest.h>

#include <sstream>

#include "cli.hpp"
#include "layerkit/eval.hpp"
#include "layerkit/experiment.hpp"
#include "support.hpp"

using namespace layerkit;
using namespace layerkit::test;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run layerkit_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "layerkit");
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

double number_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size()));
}

// Strongly separated classes; 60 readings per episode keeps runs short.
const char* kEasySim = R"({"signal": {"separation": 12.0, "proximity": 1.5, "sample_rate_hz": 60.0}})";

}  // namespace

TEST_CASE("collect") {
  const auto dir = scratch_dir("cli_collect");
  write_file(dir / "sim.json", kEasySim);
  const std::string cfg = (dir / "sim.json").string();

  const Run a = layerkit_cli({"collect", "--config", cfg, "--episodes", "54", "--out",
                              (dir / "a.jsonl").string(), "--seed", "7"});
  REQUIRE(a.code == 0);
  CHECK(line_count(read_file(dir / "a.jsonl")) == 54);
  CHECK(a.out.find("label 0") != std::string::npos);

  const Run b = layerkit_cli({"collect", "--config", cfg, "--episodes", "54", "--out",
                              (dir / "b.jsonl").string(), "--seed", "7"});
  REQUIRE(b.code == 0);
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));

  // Default stack: 4 mm layers, so d_vert = 2 is the middle of the one-layer band.
  const Run one = layerkit_cli({"collect", "--config", cfg, "--range-mm", "0", "--heights", "2",
                                "--out", (dir / "one.jsonl").string()});
  REQUIRE(one.code == 0);
  CHECK(one.out.find("label 1: 54") != std::string::npos);
  for (int c : {0, 2, 3}) {
    CHECK(one.out.find("label " + std::to_string(c)) == std::string::npos);
  }
}

TEST_CASE("train and crossval") {
  const auto dir = scratch_dir("cli_train");
  write_file(dir / "sim.json", kEasySim);
  const std::string data = (dir / "d.jsonl").string();
  REQUIRE(layerkit_cli({"collect", "--config", (dir / "sim.json").string(), "--out", data,
                        "--episodes", "24", "--seed", "3"})
              .code == 0);

  const Run t1 = layerkit_cli({"train", "--data", data, "--out", (dir / "m1.json").string()});
  REQUIRE(t1.code == 0);
  CHECK(number_after(t1.out, "held-out balanced accuracy ") >= 0.99);
  const Run t2 = layerkit_cli({"train", "--data", data, "--out", (dir / "m2.json").string()});
  CHECK(read_file(dir / "m1.json") == read_file(dir / "m2.json"));
  CHECK(load_model(dir / "m1.json").k() == 10);

  const Run big_k = layerkit_cli({"train", "--data", data, "--k", "100000", "--out",
                                  (dir / "m3.json").string()});
  CHECK(big_k.code == 2);
  CHECK(big_k.err.find("InsufficientData") != std::string::npos);

  const Run cv = layerkit_cli({"crossval", "--data", data, "--folds", "1", "--out",
                               (dir / "r1.json").string()});
  REQUIRE(cv.code == 0);
  CHECK(cv.out.find("balanced accuracy 1.00±0.00") != std::string::npos);
  const CvReport rep = cv_report_from_json(read_file(dir / "r1.json"));
  CHECK(rep.folds == 1);
  CHECK(rep.k == 10);

  layerkit_cli({"crossval", "--data", data, "--folds", "5", "--out", (dir / "r2.json").string()});
  layerkit_cli({"crossval", "--data", data, "--folds", "5", "--out", (dir / "r3.json").string()});
  CHECK(read_file(dir / "r2.json") == read_file(dir / "r3.json"));

  const Run tiny = layerkit_cli({"crossval", "--data", data, "--k", "100000", "--out",
                                 (dir / "r4.json").string()});
  CHECK(tiny.code == 2);
}

TEST_CASE("trial") {
  const auto dir = scratch_dir("cli_trial");
  const Run r = layerkit_cli({"trial", "--classifier", "oracle", "--policy", "feedback",
                              "--target", "1", "--seed", "4"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find(R"("success":true)") != std::string::npos);
  CHECK(r.out.find(R"("seed":4)") != std::string::npos);

  const Run to_file = layerkit_cli({"trial", "--classifier", "stochastic", "--confusion",
                                    "reference", "--out", (dir / "t.json").string()});
  REQUIRE(to_file.code == 0);
  CHECK(read_file(dir / "t.json").find(R"("policy":"feedback")") != std::string::npos);

  const Run bad_policy = layerkit_cli({"trial", "--policy", "greedy"});
  CHECK(bad_policy.code == 2);
  CHECK(bad_policy.err.find("fixed, random, feedback") != std::string::npos);

  CHECK(layerkit_cli({"trial", "--target", "3"}).code == 2);
  CHECK(layerkit_cli({"trial", "--classifier", "oracle", "--target", "3", "--experimental"})
            .code == 0);
  CHECK(layerkit_cli({"trial", "--classifier", "knn", "--model", "/nonexistent.json"}).code == 2);
}

TEST_CASE("experiment and report") {
  const auto dir = scratch_dir("cli_experiment");
  write_file(dir / "exp.json", R"({
    "seed": 1, "trials_per_cell": 10,
    "env": {"layer_thickness_mm": 3.0},
    "tuned_heights_mm": {"d1": 2.5, "d2": 5.5},
    "policy": {"window": 20},
    "classifiers": {"table": {"type": "stochastic", "renormalize": true,
      "confusion": [[1,0,0,0],[0,0.999,0,0.001],[0.03,0.003,0.866,0.1],[0.128,0.256,0.138,0.478]]}},
    "methods": [
      {"name": "fixed-open-loop", "policy": "fixed"},
      {"name": "random-tactile", "policy": "random", "classifier": "table"},
      {"name": "feedback-tactile", "policy": "feedback", "classifier": "table"}
    ]
  })");
  const std::string csv = (dir / "r.csv").string();
  const Run r = layerkit_cli({"experiment", "--config", (dir / "exp.json").string(), "--out-csv",
                              csv, "--out-json", (dir / "r.json").string(), "--verbose"});
  REQUIRE(r.code == 0);
  const auto rows = parse_results_csv(read_file(csv));
  REQUIRE(rows.size() == 3);
  for (const ResultsRow& row : rows) {
    CHECK(row.success + row.prediction_failures + row.grasp_failures == row.trials);
    CHECK(row.trials == 10);
  }
  CHECK(read_file(dir / "r.json").find("\"trials\"") != std::string::npos);

  const Run rep = layerkit_cli({"report", "--csv", csv});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("feedback-tactile") != std::string::npos);

  write_file(dir / "empty.csv", "");
  const Run empty = layerkit_cli({"report", "--csv", (dir / "empty.csv").string()});
  CHECK(empty.code == 0);
  CHECK(line_count(empty.out) == 1);

  const Run override_trials = layerkit_cli({"experiment", "--config",
                                            (dir / "exp.json").string(), "--trials", "3",
                                            "--out-csv", (dir / "r3.csv").string()});
  REQUIRE(override_trials.code == 0);
  CHECK(parse_results_csv(read_file(dir / "r3.csv"))[0].trials == 3);

  write_file(dir / "bad.json", R"({"methods": [{"name": "x", "policy": "feedback", "classifier": "nope"}]})");
  CHECK(layerkit_cli({"experiment", "--config", (dir / "bad.json").string()}).code == 2);
}

TEST_CASE("usage and data errors exit 2") {
  CHECK(layerkit_cli({}).code == 2);
  CHECK(layerkit_cli({"frobnicate"}).code == 2);
  CHECK(layerkit_cli({"train"}).code == 2);
  CHECK(layerkit_cli({"train", "--data", "/nonexistent.jsonl", "--out", "/tmp/x.json"}).code == 2);
  CHECK(layerkit_cli({"report", "--csv", "/nonexistent.csv"}).code == 2);
  CHECK(layerkit_cli({"collect", "--config", "/nonexistent.json", "--out", "/tmp/x"}).code == 2);

  const auto dir = scratch_dir("cli_errors");
  write_file(dir / "bad.jsonl", "{\"id\": 1}\n");
  const Run bad = layerkit_cli({"train", "--data", (dir / "bad.jsonl").string(), "--out",
                                (dir / "m.json").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 1") != std::string::npos);
  CHECK(layerkit_cli({"--help"}).code == 0);
}
