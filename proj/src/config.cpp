#include "promptevo/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pevo {

namespace {

using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& message) {
  throw ConfigError(message);
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void expect_object(const ordered_json& j, const std::string& where) {
  if (!j.is_object()) fail("config: '" + where + "' must be an object");
}

void reject_unknown(const ordered_json& block, const std::string& where,
                    const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : block.items()) {
    (void)value;
    bool known = false;
    for (const auto& a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) fail("config: unknown key '" + join_path(where, key) + "'");
  }
}

int get_int(const ordered_json& block, const std::string& where,
            const std::string& key, int fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    fail("config: '" + join_path(where, key) + "' must be an integer");
  }
  return v.get<int>();
}

std::uint64_t get_u64(const ordered_json& block, const std::string& where,
                      const std::string& key, std::uint64_t fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    fail("config: '" + join_path(where, key) +
         "' must be a non-negative integer");
  }
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
    fail("config: '" + join_path(where, key) +
         "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

double get_double(const ordered_json& block, const std::string& where,
                  const std::string& key, double fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (!v.is_number()) {
    fail("config: '" + join_path(where, key) + "' must be a number");
  }
  return v.get<double>();
}

bool get_bool(const ordered_json& block, const std::string& where,
              const std::string& key, bool fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (!v.is_boolean()) {
    fail("config: '" + join_path(where, key) + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string get_string(const ordered_json& block, const std::string& where,
                       const std::string& key, const std::string& fallback) {
  if (!block.contains(key)) return fallback;
  const auto& v = block.at(key);
  if (!v.is_string()) {
    fail("config: '" + join_path(where, key) + "' must be a string");
  }
  return v.get<std::string>();
}

RunConfig parse_run(const ordered_json& doc) {
  RunConfig run;
  run.batch_size = get_int(doc, "", "batch_size", run.batch_size);
  run.iterations = get_int(doc, "", "iterations", run.iterations);
  run.beam_width = get_int(doc, "", "beam_width", run.beam_width);
  run.candidates_per_iter =
      get_int(doc, "", "candidates_per_iter", run.candidates_per_iter);
  run.total_quota = get_int(doc, "", "total_quota", run.total_quota);
  run.instance_clusters =
      get_int(doc, "", "instance_clusters", run.instance_clusters);
  run.gradient_clusters =
      get_int(doc, "", "gradient_clusters", run.gradient_clusters);
  run.decay = get_double(doc, "", "decay", run.decay);
  run.ucb_alpha = get_double(doc, "", "ucb_alpha", run.ucb_alpha);
  run.top_n_per_cluster =
      get_int(doc, "", "top_n_per_cluster", run.top_n_per_cluster);
  run.seed = get_u64(doc, "", "seed", run.seed);
  run.eval_minibatch = get_int(doc, "", "eval_minibatch", run.eval_minibatch);
  run.ucb_budget = get_int(doc, "", "ucb_budget", run.ucb_budget);
  run.pool_min_weight =
      get_double(doc, "", "pool_min_weight", run.pool_min_weight);
  run.pool_cap = get_int(doc, "", "pool_cap", run.pool_cap);
  run.parallelism = get_int(doc, "", "parallelism", run.parallelism);
  run.retries = get_int(doc, "", "retries", run.retries);
  return run;
}

DatasetSpec parse_dataset(const ordered_json& block,
                          std::optional<GenerateConfig>& generate_out) {
  const std::string where = "dataset";
  expect_object(block, where);
  reject_unknown(block, where,
                 {"path", "test_path", "format", "answer_mode",
                  "positive_label", "extraction", "pattern", "macro_f1",
                  "eval_fraction", "generate"});

  DatasetSpec spec;
  spec.path = get_string(block, where, "path", "");
  spec.test_path = get_string(block, where, "test_path", "");

  const std::string format = get_string(block, where, "format", "jsonl");
  if (format != "jsonl") {
    fail("config: 'dataset.format' must be \"jsonl\"");
  }
  spec.format = DatasetSpec::Format::jsonl;

  const std::string mode =
      get_string(block, where, "answer_mode", "exact_match");
  if (mode == "exact_match") {
    spec.answer_mode = DatasetSpec::AnswerMode::exact_match;
  } else if (mode == "numeric_match") {
    spec.answer_mode = DatasetSpec::AnswerMode::numeric_match;
  } else if (mode == "binary_label") {
    spec.answer_mode = DatasetSpec::AnswerMode::binary_label;
  } else {
    fail("config: 'dataset.answer_mode' must be one of exact_match, "
         "numeric_match, binary_label");
  }

  spec.positive_label = get_string(block, where, "positive_label", "");
  if (spec.answer_mode == DatasetSpec::AnswerMode::binary_label &&
      spec.positive_label.empty()) {
    fail("config: answer_mode binary_label requires 'dataset.positive_label'");
  }

  const std::string extraction =
      get_string(block, where, "extraction", "last_line");
  if (extraction == "last_line") {
    spec.extraction = DatasetSpec::Extraction::last_line;
  } else if (extraction == "tag") {
    spec.extraction = DatasetSpec::Extraction::tag;
  } else if (extraction == "regex") {
    spec.extraction = DatasetSpec::Extraction::regex;
  } else {
    fail("config: 'dataset.extraction' must be one of last_line, tag, regex");
  }

  spec.pattern = get_string(block, where, "pattern", "");
  if (spec.extraction == DatasetSpec::Extraction::regex &&
      spec.pattern.empty()) {
    fail("config: extraction regex requires 'dataset.pattern'");
  }

  spec.macro_f1 = get_bool(block, where, "macro_f1", false);
  spec.eval_fraction =
      get_double(block, where, "eval_fraction", spec.eval_fraction);
  if (spec.eval_fraction <= 0.0 || spec.eval_fraction >= 1.0) {
    fail("config: 'dataset.eval_fraction' must be in (0, 1)");
  }

  if (block.contains("generate")) {
    const auto& gen = block.at("generate");
    expect_object(gen, "dataset.generate");
    reject_unknown(gen, "dataset.generate", {"train_size", "test_size"});
    GenerateConfig g;
    g.train_size = get_int(gen, "dataset.generate", "train_size", g.train_size);
    g.test_size = get_int(gen, "dataset.generate", "test_size", g.test_size);
    if (g.train_size < 1) {
      fail("config: 'dataset.generate.train_size' must be >= 1");
    }
    if (g.test_size < 0) {
      fail("config: 'dataset.generate.test_size' must be >= 0");
    }
    generate_out = g;
  }

  if (spec.path.empty() && !generate_out.has_value()) {
    fail("config: dataset needs either 'path' or a 'generate' block");
  }
  return spec;
}

EncoderSpec parse_encoder(const ordered_json& block) {
  const std::string where = "encoder";
  expect_object(block, where);
  reject_unknown(block, where,
                 {"kind", "dimension", "ngram_min", "ngram_max", "endpoint",
                  "model_name", "api_key_env", "retries", "backoff_base_ms"});

  EncoderSpec spec;
  const std::string kind = get_string(block, where, "kind", "feature_hash");
  if (kind == "feature_hash") {
    spec.kind = EncoderSpec::Kind::feature_hash;
  } else if (kind == "remote") {
    spec.kind = EncoderSpec::Kind::remote;
  } else {
    fail("config: 'encoder.kind' must be feature_hash or remote");
  }
  spec.dimension = get_int(block, where, "dimension", spec.dimension);
  spec.ngram_min = get_int(block, where, "ngram_min", spec.ngram_min);
  spec.ngram_max = get_int(block, where, "ngram_max", spec.ngram_max);
  spec.endpoint = get_string(block, where, "endpoint", "");
  spec.model_name = get_string(block, where, "model_name", "");
  spec.api_key_env = get_string(block, where, "api_key_env", "");
  spec.retries = get_int(block, where, "retries", spec.retries);
  spec.backoff_base_ms =
      get_int(block, where, "backoff_base_ms", spec.backoff_base_ms);

  if (spec.dimension < 1) fail("config: 'encoder.dimension' must be >= 1");
  if (spec.ngram_min < 1 || spec.ngram_max < spec.ngram_min) {
    fail("config: encoder n-gram range requires 1 <= ngram_min <= ngram_max");
  }
  if (spec.kind == EncoderSpec::Kind::remote &&
      (spec.endpoint.empty() || spec.model_name.empty())) {
    fail("config: encoder.kind remote requires 'endpoint' and 'model_name'");
  }
  return spec;
}

ChatModelConfig parse_chat_model(const ordered_json& block,
                                 const std::string& where,
                                 double default_temperature,
                                 int default_max_tokens) {
  ChatModelConfig cfg;
  cfg.temperature = default_temperature;
  cfg.max_tokens = default_max_tokens;
  if (block.is_null()) return cfg;
  expect_object(block, where);
  reject_unknown(block, where,
                 {"base_url", "model", "api_key_env", "temperature",
                  "max_tokens"});
  cfg.base_url = get_string(block, where, "base_url", "");
  cfg.model = get_string(block, where, "model", "");
  cfg.api_key_env = get_string(block, where, "api_key_env", "");
  cfg.temperature = get_double(block, where, "temperature", cfg.temperature);
  cfg.max_tokens = get_int(block, where, "max_tokens", cfg.max_tokens);
  if (cfg.temperature < 0.0) {
    fail("config: '" + where + ".temperature' must be >= 0");
  }
  if (cfg.max_tokens < 1) {
    fail("config: '" + where + ".max_tokens' must be >= 1");
  }
  return cfg;
}

BackendConfig parse_backend(ordered_json block) {
  const std::string where = "backend";
  BackendConfig cfg;
  if (block.is_null()) block = ordered_json::object();
  expect_object(block, where);
  reject_unknown(block, where,
                 {"kind", "synthetic", "task", "optimizer", "templates_dir"});

  const std::string kind = get_string(block, where, "kind", "synthetic");
  if (kind == "synthetic") {
    cfg.kind = BackendConfig::Kind::synthetic;
  } else if (kind == "remote") {
    cfg.kind = BackendConfig::Kind::remote;
  } else {
    fail("config: 'backend.kind' must be synthetic or remote");
  }

  if (block.contains("synthetic")) {
    const auto& syn = block.at("synthetic");
    expect_object(syn, "backend.synthetic");
    reject_unknown(syn, "backend.synthetic",
                   {"categories", "rule_tokens", "p_hit", "p_miss", "seed"});
    cfg.synthetic.categories = get_int(syn, "backend.synthetic", "categories",
                                       cfg.synthetic.categories);
    if (syn.contains("rule_tokens")) {
      const auto& toks = syn.at("rule_tokens");
      if (!toks.is_array()) {
        fail("config: 'backend.synthetic.rule_tokens' must be an array");
      }
      for (const auto& t : toks) {
        if (!t.is_string()) {
          fail("config: 'backend.synthetic.rule_tokens' entries must be "
               "strings");
        }
        cfg.synthetic.rule_tokens.push_back(t.get<std::string>());
      }
    }
    cfg.synthetic.p_hit =
        get_double(syn, "backend.synthetic", "p_hit", cfg.synthetic.p_hit);
    cfg.synthetic.p_miss =
        get_double(syn, "backend.synthetic", "p_miss", cfg.synthetic.p_miss);
    if (syn.contains("seed")) {
      cfg.synthetic.seed = get_u64(syn, "backend.synthetic", "seed", 0);
    }
    if (cfg.synthetic.categories < 1) {
      fail("config: 'backend.synthetic.categories' must be >= 1");
    }
    if (!cfg.synthetic.rule_tokens.empty() &&
        static_cast<int>(cfg.synthetic.rule_tokens.size()) !=
            cfg.synthetic.categories) {
      fail("config: 'backend.synthetic.rule_tokens' must list one token per "
           "category");
    }
    if (!(0.0 <= cfg.synthetic.p_miss &&
          cfg.synthetic.p_miss < cfg.synthetic.p_hit &&
          cfg.synthetic.p_hit <= 1.0)) {
      fail("config: synthetic backend requires 0 <= p_miss < p_hit <= 1");
    }
  }

  cfg.task = parse_chat_model(
      block.contains("task") ? block.at("task") : ordered_json(), where + ".task",
      0.0, 1024);
  cfg.optimizer = parse_chat_model(
      block.contains("optimizer") ? block.at("optimizer") : ordered_json(),
      where + ".optimizer", 0.7, 2048);
  cfg.templates_dir =
      get_string(block, where, "templates_dir", cfg.templates_dir);

  if (cfg.kind == BackendConfig::Kind::remote) {
    if (cfg.task.base_url.empty() || cfg.task.model.empty()) {
      fail("config: backend.kind remote requires 'backend.task.base_url' and "
           "'backend.task.model'");
    }
    if (cfg.optimizer.base_url.empty() || cfg.optimizer.model.empty()) {
      fail("config: backend.kind remote requires 'backend.optimizer.base_url' "
           "and 'backend.optimizer.model'");
    }
  }
  return cfg;
}

SimulateConfig parse_simulate(const ordered_json& block) {
  SimulateConfig cfg;
  if (block.is_null()) return cfg;
  expect_object(block, "simulate");
  reject_unknown(block, "simulate", {"batch_sizes"});
  if (block.contains("batch_sizes")) {
    const auto& sizes = block.at("batch_sizes");
    if (!sizes.is_array()) {
      fail("config: 'simulate.batch_sizes' must be an array of integers");
    }
    cfg.batch_sizes.clear();
    for (const auto& s : sizes) {
      if (!s.is_number_integer() && !s.is_number_unsigned()) {
        fail("config: 'simulate.batch_sizes' must be an array of integers");
      }
      const int v = s.get<int>();
      if (v < 1) fail("config: 'simulate.batch_sizes' entries must be >= 1");
      cfg.batch_sizes.push_back(v);
    }
    if (cfg.batch_sizes.empty()) {
      fail("config: 'simulate.batch_sizes' must not be empty");
    }
  }
  return cfg;
}

// "a.b.c=value": descends/creates objects, sets the leaf. Values parse as
// JSON when they can, otherwise they are taken as literal strings.
void apply_override(ordered_json& doc, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail("override '" + item + "' is not of the form key=value");
  }
  const std::string key_path = item.substr(0, eq);
  const std::string raw_value = item.substr(eq + 1);

  ordered_json value = ordered_json::parse(raw_value, nullptr, false);
  if (value.is_discarded()) value = raw_value;

  ordered_json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key_path.find('.', start);
    const std::string key = key_path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) {
      fail("override '" + item + "' has an empty key segment");
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = ordered_json::object();
    node = &(*node)[key];
    if (!node->is_object()) {
      fail("override '" + item + "' descends through a non-object value");
    }
    start = dot + 1;
  }
}

std::string resolve_against(const std::string& dir, const std::string& path) {
  if (path.empty() || dir.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(dir) / p).lexically_normal().string();
}

}  // namespace

AppConfig parse_app_config(const std::string& json_text,
                           const std::string& config_dir,
                           const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed_flag) {
  ordered_json doc = ordered_json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    fail("config: file is not valid JSON");
  }
  expect_object(doc, "(top level)");

  for (const auto& item : overrides) apply_override(doc, item);
  if (seed_flag.has_value()) doc["seed"] = *seed_flag;

  reject_unknown(
      doc, "",
      {"batch_size", "iterations", "beam_width", "candidates_per_iter",
       "total_quota", "instance_clusters", "gradient_clusters", "decay",
       "ucb_alpha", "top_n_per_cluster", "seed", "eval_minibatch",
       "ucb_budget", "pool_min_weight", "pool_cap", "parallelism", "retries",
       "initial_prompt", "dataset", "encoder", "backend", "simulate"});

  AppConfig cfg;
  cfg.run = parse_run(doc);
  cfg.initial_prompt =
      get_string(doc, "", "initial_prompt", kDefaultInitialPrompt);
  if (cfg.initial_prompt.empty()) {
    fail("config: 'initial_prompt' must be non-empty");
  }

  if (!doc.contains("dataset")) {
    fail("config: missing 'dataset' block");
  }
  cfg.dataset = parse_dataset(doc.at("dataset"), cfg.generate);
  cfg.encoder = parse_encoder(doc.contains("encoder") ? doc.at("encoder")
                                                      : ordered_json::object());
  cfg.backend = parse_backend(doc.contains("backend") ? doc.at("backend")
                                                      : ordered_json());
  cfg.simulate = parse_simulate(doc.contains("simulate") ? doc.at("simulate")
                                                         : ordered_json());

  if (cfg.generate.has_value() &&
      cfg.backend.kind != BackendConfig::Kind::synthetic) {
    fail("config: 'dataset.generate' requires backend.kind synthetic");
  }

  cfg.config_dir = config_dir;
  cfg.dataset.path = resolve_against(config_dir, cfg.dataset.path);
  cfg.dataset.test_path = resolve_against(config_dir, cfg.dataset.test_path);
  cfg.backend.templates_dir =
      resolve_against(config_dir, cfg.backend.templates_dir);

  cfg.echo_json = doc.dump();
  return cfg;
}

AppConfig load_app_config(const std::string& path,
                          const std::vector<std::string>& overrides,
                          std::optional<std::uint64_t> seed_flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail("config: cannot open file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_app_config(buffer.str(), dir, overrides, seed_flag);
}

}  // namespace pevo
