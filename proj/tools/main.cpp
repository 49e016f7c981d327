#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "promptevo/config.hpp"
#include "promptevo/evolution.hpp"
#include "promptevo/parallel.hpp"
#include "promptevo/templates.hpp"

namespace {

using namespace pevo;

struct Splits {
  std::vector<Example> train;
  std::vector<Example> test;
};

SyntheticEnv make_env(const AppConfig& cfg) {
  SyntheticEnv env;
  env.categories = cfg.backend.synthetic.categories;
  env.rule_tokens = cfg.backend.synthetic.rule_tokens.empty()
                        ? SyntheticEnv::default_tokens(env.categories)
                        : cfg.backend.synthetic.rule_tokens;
  env.p_hit = cfg.backend.synthetic.p_hit;
  env.p_miss = cfg.backend.synthetic.p_miss;
  env.seed = cfg.backend.synthetic.seed.value_or(cfg.run.seed);
  return env;
}

Splits make_splits(const AppConfig& cfg, const std::string& output_dir) {
  Splits splits;
  if (cfg.generate.has_value()) {
    const SyntheticEnv env = make_env(cfg);
    splits.train = env.make_examples(cfg.generate->train_size, "tr");
    splits.test = env.make_examples(cfg.generate->test_size, "te");
    const auto data_dir = std::filesystem::path(output_dir) / "data";
    std::filesystem::create_directories(data_dir);
    write_jsonl(splits.train, (data_dir / "train.jsonl").string());
    write_jsonl(splits.test, (data_dir / "test.jsonl").string());
  } else {
    splits.train = load_dataset(cfg.dataset);
    if (!cfg.dataset.test_path.empty()) {
      splits.test = load_jsonl(cfg.dataset.test_path);
    }
  }
  return splits;
}

struct Backends {
  std::shared_ptr<TaskBackend> task;
  std::shared_ptr<OptimizerBackend> optimizer;
};

Backends make_backends(const AppConfig& cfg) {
  Backends b;
  if (cfg.backend.kind == BackendConfig::Kind::synthetic) {
    const SyntheticEnv env = make_env(cfg);
    b.task = std::make_shared<SyntheticTaskBackend>(env);
    b.optimizer = std::make_shared<SyntheticOptimizerBackend>(env);
  } else {
    const RetryPolicy policy{cfg.run.retries, 500};
    auto task_client = std::make_shared<HttpChatClient>(
        cfg.backend.task.base_url, cfg.backend.task.api_key_env, policy);
    b.task = std::make_shared<RemoteTaskBackend>(task_client, cfg.backend.task);
    auto opt_client = std::make_shared<HttpChatClient>(
        cfg.backend.optimizer.base_url, cfg.backend.optimizer.api_key_env,
        policy);
    b.optimizer = std::make_shared<RemoteOptimizerBackend>(
        opt_client, cfg.backend.optimizer,
        load_optimizer_templates(cfg.backend.templates_dir), cfg.run.retries);
  }
  return b;
}

Engine make_engine(const AppConfig& cfg, const std::string& output_dir) {
  Splits splits = make_splits(cfg, output_dir);
  Backends backends = make_backends(cfg);
  Engine engine(cfg.run, cfg.dataset, std::move(splits.train),
                std::move(splits.test), make_encoder(cfg.encoder),
                backends.task, backends.optimizer, output_dir,
                cfg.initial_prompt);
  engine.set_config_echo(cfg.echo_json);
  return engine;
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += "\"";
  return out;
}

std::string read_prompt_file(const std::string& path) {
  std::string text;
  try {
    text = load_text_file(path);
  } catch (const TemplateError& e) {
    throw ConfigError(e.what());
  }
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) {
    text.pop_back();
  }
  if (text.empty()) {
    throw ConfigError("prompt file is empty: " + path);
  }
  return text;
}

int cmd_optimize(const AppConfig& cfg, const std::string& output_dir,
                 bool resume) {
  Engine engine = make_engine(cfg, output_dir);
  const OptimizeReport report = engine.optimize(resume);
  std::cout << "iterations_run=" << report.iterations.size() << "\n"
            << "baseline_score=" << format_score(report.baseline_score) << "\n"
            << "best_score=" << format_score(report.best_score) << "\n"
            << "report=" << engine.report_path() << "\n";
  return 0;
}

int cmd_evaluate(const AppConfig& cfg, const std::string& output_dir,
                 const std::string& prompt_path) {
  const std::string prompt = read_prompt_file(prompt_path);
  Splits splits = make_splits(cfg, output_dir);
  const std::vector<Example>& target =
      splits.test.empty() ? splits.train : splits.test;
  if (target.empty()) {
    throw DatasetError("no examples to evaluate: " + cfg.dataset.path);
  }
  Backends backends = make_backends(cfg);

  const auto preds =
      parallel_map(target.size(), cfg.run.parallelism, [&](std::size_t i) {
        return predict(prompt, target[i], *backends.task, cfg.dataset);
      });
  const double metric = dataset_metric(target, preds, cfg.dataset);

  std::filesystem::create_directories(output_dir);
  const std::string csv_path = output_dir + "/evaluate.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw std::runtime_error("cannot write " + csv_path);
  }
  csv << "id,score,correct,extracted_answer,gold_answer\n";
  for (std::size_t i = 0; i < target.size(); ++i) {
    csv << csv_field(target[i].id) << ',' << format_score(preds[i].score)
        << ',' << (preds[i].correct ? 1 : 0) << ','
        << csv_field(preds[i].extracted_answer) << ','
        << csv_field(target[i].answer) << '\n';
  }
  csv.close();

  std::cout << format_score(metric) << "\n";
  std::cerr << "per-example results: " << csv_path << "\n";
  return 0;
}

int cmd_report(const std::string& output_dir) {
  const std::string trace_path = output_dir + "/trace.jsonl";
  std::ifstream in(trace_path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("no trace found at " + trace_path);
  }
  std::vector<IterationTrace> traces;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    traces.push_back(trace_from_json_line(line));
  }

  const std::string csv_path = output_dir + "/scores.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw std::runtime_error("cannot write " + csv_path);
  }
  csv << "iteration,batch_accuracy,leader_holdout_score\n";
  for (const auto& t : traces) {
    csv << t.iteration << ',' << format_score(t.batch_accuracy) << ','
        << format_score(t.leader_holdout_score) << '\n';
  }
  csv.close();

  double best = 0.0;
  for (const auto& t : traces) {
    best = std::max(best, t.leader_holdout_score);
    std::cout << "iter " << t.iteration
              << ": batch_accuracy=" << format_score(t.batch_accuracy)
              << " leader_holdout=" << format_score(t.leader_holdout_score)
              << " pool=" << t.pool_size
              << " candidates=" << t.candidates_generated << "\n";
  }
  std::cout << "iterations=" << traces.size()
            << " best_leader_holdout=" << format_score(best) << "\n";
  std::cerr << "scores: " << csv_path << "\n";
  return 0;
}

int cmd_simulate(const AppConfig& cfg, const std::string& output_dir) {
  if (cfg.backend.kind != BackendConfig::Kind::synthetic) {
    throw ConfigError("simulate requires backend.kind synthetic");
  }
  std::filesystem::create_directories(output_dir);
  const std::string csv_path = output_dir + "/sweep.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw std::runtime_error("cannot write " + csv_path);
  }
  csv << "batch_size,final_score\n";
  for (const int size : cfg.simulate.batch_sizes) {
    AppConfig point = cfg;
    point.run.batch_size = size;
    const std::string sub_dir =
        output_dir + "/b" + std::to_string(size);
    Engine engine = make_engine(point, sub_dir);
    const OptimizeReport report = engine.optimize(false);
    const std::vector<Example>& target = engine.test_split().empty()
                                             ? engine.eval_slice()
                                             : engine.test_split();
    const double final_score =
        engine.evaluate_prompt(report.best_prompt, target);
    csv << size << ',' << format_score(final_score) << '\n';
    std::cout << "batch_size=" << size
              << " final_score=" << format_score(final_score) << "\n";
  }
  csv.close();
  std::cerr << "sweep: " << csv_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative prompt optimization over chat-model backends"};
  app.require_subcommand(1);

  struct CommonFlags {
    std::string config;
    std::string output = "out";
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::vector<std::string> overrides;
  };

  auto add_common = [](CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "JSON config file")
        ->required();
    cmd->add_option("--output", flags.output, "output directory");
    flags.seed_opt =
        cmd->add_option("--seed", flags.seed, "override the root seed");
    cmd->add_option("--overrides", flags.overrides,
                    "key=value config overrides (dotted keys reach blocks)")
        ->delimiter(',');
  };

  CommonFlags opt_flags, res_flags, eval_flags, sim_flags;
  std::string report_output = "out";
  std::string prompt_file;

  CLI::App* cmd_opt =
      app.add_subcommand("optimize", "run the optimization loop");
  add_common(cmd_opt, opt_flags);

  CLI::App* cmd_res =
      app.add_subcommand("resume", "continue from the last checkpoint");
  add_common(cmd_res, res_flags);

  CLI::App* cmd_eval =
      app.add_subcommand("evaluate", "score one prompt on the dataset");
  add_common(cmd_eval, eval_flags);
  cmd_eval->add_option("--prompt-file", prompt_file, "file holding the prompt")
      ->required();

  CLI::App* cmd_rep =
      app.add_subcommand("report", "summarize a run's trace into CSV");
  cmd_rep->add_option("--output", report_output,
                      "output directory of the run to summarize");

  CLI::App* cmd_sim = app.add_subcommand(
      "simulate", "sweep batch sizes with the synthetic backend");
  add_common(cmd_sim, sim_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto seed_of = [](const CommonFlags& flags) {
    return flags.seed_opt->count() > 0
               ? std::optional<std::uint64_t>(flags.seed)
               : std::nullopt;
  };

  try {
    if (cmd_opt->parsed()) {
      const AppConfig cfg = load_app_config(
          opt_flags.config, opt_flags.overrides, seed_of(opt_flags));
      return cmd_optimize(cfg, opt_flags.output, /*resume=*/false);
    }
    if (cmd_res->parsed()) {
      const AppConfig cfg = load_app_config(
          res_flags.config, res_flags.overrides, seed_of(res_flags));
      return cmd_optimize(cfg, res_flags.output, /*resume=*/true);
    }
    if (cmd_eval->parsed()) {
      const AppConfig cfg = load_app_config(
          eval_flags.config, eval_flags.overrides, seed_of(eval_flags));
      return cmd_evaluate(cfg, eval_flags.output, prompt_file);
    }
    if (cmd_rep->parsed()) {
      return cmd_report(report_output);
    }
    if (cmd_sim->parsed()) {
      const AppConfig cfg = load_app_config(
          sim_flags.config, sim_flags.overrides, seed_of(sim_flags));
      return cmd_simulate(cfg, sim_flags.output);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
