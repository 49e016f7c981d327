#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using testutil::make_clean_dir;
using testutil::slurp;
using testutil::spit;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
};

// Runs the installed binary with stdout captured; stderr goes to its own
// file so diagnostics stay inspectable but uncompared.
CliResult run_cli(const std::string& args,
                  const std::filesystem::path& scratch) {
  const auto out_path = scratch / "stdout.txt";
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd = std::string(PROMPTEVO_CLI_PATH) + " " + args + " >" +
                          out_path.string() + " 2>" + err_path.string();
  const int status = std::system(cmd.c_str());
  CliResult result;
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  result.out = slurp(out_path);
  return result;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text) n += ch == '\n' ? 1 : 0;
  return n;
}

std::string base_config() {
  return R"({
    "batch_size": 8, "iterations": 2, "beam_width": 2,
    "candidates_per_iter": 4, "total_quota": 6, "instance_clusters": 3,
    "gradient_clusters": 3, "eval_minibatch": 4, "ucb_budget": 16,
    "parallelism": 2, "seed": 11,
    "initial_prompt": "Handle each item by its rule.",
    "dataset": {"generate": {"train_size": 40, "test_size": 10},
                "eval_fraction": 0.25},
    "encoder": {"dimension": 32},
    "backend": {"synthetic": {"categories": 3, "p_hit": 1.0, "p_miss": 0.0}}
  })";
}

std::filesystem::path write_config(const std::filesystem::path& dir,
                                   const std::string& text) {
  const auto path = dir / "run.json";
  spit(path, text);
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("optimize writes the full artifact set") {
  const auto dir = make_clean_dir("cli_optimize");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();

  const auto r =
      run_cli("optimize --config " + cfg.string() + " --output " + out, dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("iterations_run=2") != std::string::npos);
  CHECK(r.out.find("baseline_score=") != std::string::npos);
  CHECK(r.out.find("best_score=") != std::string::npos);

  CHECK(std::filesystem::exists(dir / "out/checkpoint.json"));
  CHECK(line_count(slurp(dir / "out/trace.jsonl")) == 2);
  CHECK(line_count(slurp(dir / "out/data/train.jsonl")) == 40);
  CHECK(line_count(slurp(dir / "out/data/test.jsonl")) == 10);

  const auto report = nlohmann::json::parse(slurp(dir / "out/report.json"));
  CHECK(report.at("iterations").size() == 2);
  CHECK(report.at("best_score").get<double>() >=
        report.at("baseline_score").get<double>());
  CHECK(report.at("config").at("iterations").get<int>() == 2);
  CHECK(report.at("config").at("seed").get<int>() == 11);
}

TEST_CASE("an override can turn the loop off entirely") {
  const auto dir = make_clean_dir("cli_zero");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();

  const auto r = run_cli("optimize --config " + cfg.string() + " --output " +
                             out + " --overrides iterations=0",
                         dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("iterations_run=0") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "out/checkpoint.json"));
  const auto report = nlohmann::json::parse(slurp(dir / "out/report.json"));
  CHECK(report.at("iterations").empty());
}

TEST_CASE("resume continues to the same bytes as a straight run") {
  const auto dir = make_clean_dir("cli_resume");
  const auto cfg = write_config(dir, base_config());
  const auto straight = (dir / "straight").string();
  const auto stepped = (dir / "stepped").string();

  CHECK(run_cli("optimize --config " + cfg.string() + " --output " + straight +
                    " --overrides iterations=4",
                dir)
            .exit_code == 0);
  CHECK(run_cli("optimize --config " + cfg.string() + " --output " + stepped,
                dir)
            .exit_code == 0);
  CHECK(run_cli("resume --config " + cfg.string() + " --output " + stepped +
                    " --overrides iterations=4",
                dir)
            .exit_code == 0);

  CHECK(slurp(dir / "straight/checkpoint.json") ==
        slurp(dir / "stepped/checkpoint.json"));
  CHECK(slurp(dir / "straight/trace.jsonl") ==
        slurp(dir / "stepped/trace.jsonl"));
  CHECK(slurp(dir / "straight/report.json") ==
        slurp(dir / "stepped/report.json"));
}

TEST_CASE("evaluate scores a prompt file against the test split") {
  const auto dir = make_clean_dir("cli_evaluate");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  spit(dir / "prompt.txt", "T0 T1 T2\n");

  const auto r = run_cli("evaluate --config " + cfg.string() + " --output " +
                             out + " --prompt-file " +
                             (dir / "prompt.txt").string(),
                         dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.rfind("1.0000", 0) == 0);

  const auto csv = slurp(dir / "out/evaluate.csv");
  CHECK(line_count(csv) == 11);  // header plus the 10 test examples
  CHECK(csv.rfind("id,score,correct,extracted_answer,gold_answer\n", 0) == 0);

  const auto again = run_cli("evaluate --config " + cfg.string() +
                                 " --output " + out + " --prompt-file " +
                                 (dir / "prompt.txt").string(),
                             dir);
  CHECK(again.exit_code == 0);
  CHECK(slurp(dir / "out/evaluate.csv") == csv);

  spit(dir / "bare.txt", "no rule words here\n");
  const auto miss = run_cli("evaluate --config " + cfg.string() +
                                " --output " + out + " --prompt-file " +
                                (dir / "bare.txt").string(),
                            dir);
  CHECK(miss.exit_code == 0);
  CHECK(miss.out.rfind("0.0000", 0) == 0);
}

TEST_CASE("evaluate with a missing prompt file is a usage error") {
  const auto dir = make_clean_dir("cli_evaluate_bad");
  const auto cfg = write_config(dir, base_config());

  CHECK(run_cli("evaluate --config " + cfg.string() + " --prompt-file " +
                    (dir / "absent.txt").string(),
                dir)
            .exit_code == 2);
  CHECK(run_cli("evaluate --config " + cfg.string(), dir).exit_code == 2);
}

TEST_CASE("report summarizes the trace into a CSV") {
  const auto dir = make_clean_dir("cli_report");
  const auto cfg = write_config(dir, base_config());
  const auto out = (dir / "out").string();
  REQUIRE(run_cli("optimize --config " + cfg.string() + " --output " + out,
                  dir)
              .exit_code == 0);

  const auto r = run_cli("report --output " + out, dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("iterations=2") != std::string::npos);
  CHECK(r.out.find("best_leader_holdout=") != std::string::npos);

  const auto csv = slurp(dir / "out/scores.csv");
  CHECK(line_count(csv) == 3);
  CHECK(csv.rfind("iteration,batch_accuracy,leader_holdout_score\n", 0) == 0);
}

TEST_CASE("report without a trace fails as a runtime error") {
  const auto dir = make_clean_dir("cli_report_empty");
  CHECK(run_cli("report --output " + (dir / "nothing").string(), dir)
            .exit_code == 1);
}

TEST_CASE("simulate sweeps batch sizes deterministically") {
  const auto dir = make_clean_dir("cli_simulate");
  std::string text = base_config();
  text.insert(text.rfind('}'), R"(, "simulate": {"batch_sizes": [4, 8]})");
  const auto cfg = write_config(dir, text);

  const auto r = run_cli("simulate --config " + cfg.string() + " --output " +
                             (dir / "s1").string() +
                             " --overrides iterations=1",
                         dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("batch_size=4") != std::string::npos);
  CHECK(r.out.find("batch_size=8") != std::string::npos);

  const auto sweep = slurp(dir / "s1/sweep.csv");
  CHECK(line_count(sweep) == 3);
  CHECK(sweep.rfind("batch_size,final_score\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "s1/b4/report.json"));
  CHECK(std::filesystem::exists(dir / "s1/b8/report.json"));

  CHECK(run_cli("simulate --config " + cfg.string() + " --output " +
                    (dir / "s2").string() + " --overrides iterations=1",
                dir)
            .exit_code == 0);
  CHECK(slurp(dir / "s2/sweep.csv") == sweep);
}

TEST_CASE("simulate refuses a remote backend") {
  const auto dir = make_clean_dir("cli_simulate_remote");
  const auto cfg = write_config(dir, R"({
    "dataset": {"path": "d.jsonl"},
    "backend": {"kind": "remote",
      "task": {"base_url": "http://t/v1", "model": "tm"},
      "optimizer": {"base_url": "http://o/v1", "model": "om"}}
  })");
  CHECK(run_cli("simulate --config " + cfg.string() + " --output " +
                    (dir / "out").string(),
                dir)
            .exit_code == 2);
}

TEST_CASE("configuration problems exit with the usage code") {
  const auto dir = make_clean_dir("cli_config_errors");

  spit(dir / "broken.json", "{not json");
  CHECK(run_cli("optimize --config " + (dir / "broken.json").string(), dir)
            .exit_code == 2);

  spit(dir / "unknown.json", R"({"dataset": {"path": "d"}, "mystery": 1})");
  CHECK(run_cli("optimize --config " + (dir / "unknown.json").string(), dir)
            .exit_code == 2);

  spit(dir / "missing_data.json",
       R"({"dataset": {"path": ")" + (dir / "absent.jsonl").string() +
           R"("}})");
  CHECK(run_cli("optimize --config " + (dir / "missing_data.json").string() +
                    " --output " + (dir / "out").string(),
                dir)
            .exit_code == 2);

  spit(dir / "empty.jsonl", "");
  spit(dir / "empty_data.json",
       R"({"dataset": {"path": ")" + (dir / "empty.jsonl").string() + R"("}})");
  CHECK(run_cli("optimize --config " + (dir / "empty_data.json").string() +
                    " --output " + (dir / "out2").string(),
                dir)
            .exit_code == 2);
}

TEST_CASE("usage mistakes exit with the usage code") {
  const auto dir = make_clean_dir("cli_usage");
  CHECK(run_cli("", dir).exit_code == 2);
  CHECK(run_cli("conjure", dir).exit_code == 2);
  CHECK(run_cli("optimize", dir).exit_code == 2);  // --config is required
}

}  // TEST_SUITE
