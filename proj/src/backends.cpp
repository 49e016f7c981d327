#include "promptevo/backends.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "promptevo/rng.hpp"
#include "promptevo/templates.hpp"

namespace pevo {

HttpChatClient::HttpChatClient(std::string base_url, std::string api_key_env,
                               RetryPolicy policy)
    : base_url_(std::move(base_url)),
      api_key_env_(std::move(api_key_env)),
      policy_(policy) {
  while (!base_url_.empty() && base_url_.back() == '/') {
    base_url_.pop_back();
  }
}

std::string HttpChatClient::chat(const ChatRequest& request) {
  if (request.user.empty()) {
    throw BackendError("chat request user message must be non-empty", false);
  }
  nlohmann::json body;
  body["model"] = request.model;
  body["messages"] = nlohmann::json::array();
  if (!request.system.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", request.system}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", request.user}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;

  const std::string reply = http_post_json_with_retries(
      base_url_ + "/chat/completions", api_key_env_, body.dump(), policy_);

  nlohmann::json j = nlohmann::json::parse(reply, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("choices") ||
      !j.at("choices").is_array() || j.at("choices").empty()) {
    throw BackendError("chat response is not the expected shape", false);
  }
  const auto& first = j.at("choices").at(0);
  if (!first.is_object() || !first.contains("message") ||
      !first.at("message").is_object() ||
      !first.at("message").contains("content") ||
      !first.at("message").at("content").is_string()) {
    throw BackendError("chat response missing message content", false);
  }
  return first.at("message").at("content").get<std::string>();
}

std::vector<std::string> SyntheticEnv::default_tokens(int categories) {
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<std::size_t>(std::max(0, categories)));
  int width = 1;
  for (int c = categories - 1; c >= 10; c /= 10) ++width;
  for (int i = 0; i < categories; ++i) {
    std::string digits = std::to_string(i);
    tokens.push_back("T" + std::string(width - digits.size(), '0') + digits);
  }
  return tokens;
}

bool SyntheticEnv::contains_token(const std::string& prompt, int category) const {
  if (category < 0 || category >= static_cast<int>(rule_tokens.size())) {
    return false;
  }
  return prompt.find(rule_tokens[category]) != std::string::npos;
}

std::uint64_t SyntheticEnv::token_signature(const std::string& prompt) const {
  std::uint64_t sig = 0;
  for (int c = 0; c < static_cast<int>(rule_tokens.size()); ++c) {
    if (contains_token(prompt, c)) {
      sig = mix64(sig, fnv1a64(rule_tokens[c]));
    } else {
      sig = mix64(sig, 0);
    }
  }
  return sig;
}

std::vector<Example> SyntheticEnv::make_examples(
    int count, const std::string& id_prefix) const {
  std::vector<Example> examples;
  examples.reserve(static_cast<std::size_t>(std::max(0, count)));
  for (int i = 0; i < count; ++i) {
    const int category = categories > 0 ? i % categories : 0;
    Example ex;
    ex.id = id_prefix + std::to_string(i);
    ex.query = "Item " + std::to_string(i) + " belongs to category " +
               std::to_string(category) +
               ". Apply the matching rule and report the outcome.";
    ex.answer = "correct:" + std::to_string(category);
    ex.metadata["category"] = std::to_string(category);
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_jsonl(const std::vector<Example>& examples, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DatasetError("cannot open dataset file for writing: " + path);
  }
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["query"] = ex.query;
    j["answer"] = ex.answer;
    if (!ex.metadata.empty()) {
      j["metadata"] = ex.metadata;
    }
    out << j.dump() << '\n';
  }
  if (!out) {
    throw DatasetError("failed writing dataset file: " + path);
  }
}

SyntheticTaskBackend::SyntheticTaskBackend(SyntheticEnv env)
    : env_(std::move(env)) {
  if (env_.rule_tokens.empty()) {
    env_.rule_tokens = SyntheticEnv::default_tokens(env_.categories);
  }
  if (static_cast<int>(env_.rule_tokens.size()) != env_.categories) {
    throw BackendError("synthetic env: rule token count must match categories",
                       false);
  }
  if (!(0.0 <= env_.p_miss && env_.p_miss < env_.p_hit && env_.p_hit <= 1.0)) {
    throw BackendError("synthetic env: require 0 <= p_miss < p_hit <= 1", false);
  }
}

std::string SyntheticTaskBackend::generate(const std::string& prompt,
                                           const Example& example) {
  const auto it = example.metadata.find("category");
  if (it == example.metadata.end()) {
    throw BackendError("synthetic env: example '" + example.id +
                           "' has no category metadata",
                       false);
  }
  int category = -1;
  try {
    category = std::stoi(it->second);
  } catch (const std::exception&) {
    throw BackendError("synthetic env: example '" + example.id +
                           "' has a non-numeric category",
                       false);
  }
  if (category < 0 || category >= env_.categories) {
    throw BackendError("synthetic env: example '" + example.id +
                           "' has category out of range",
                       false);
  }

  const double p = env_.contains_token(prompt, category) ? env_.p_hit : env_.p_miss;
  const double u = keyed_unit(env_.seed, env_.token_signature(prompt),
                              fnv1a64(example.id));
  const bool hit = u < p;
  return (hit ? "correct:" : "wrong:") + std::to_string(category);
}

RemoteTaskBackend::RemoteTaskBackend(std::shared_ptr<ChatClient> client,
                                     ChatModelConfig config)
    : client_(std::move(client)), config_(std::move(config)) {}

std::string RemoteTaskBackend::generate(const std::string& prompt,
                                        const Example& example) {
  ChatRequest req;
  req.system = prompt;
  req.user = example.query;
  req.temperature = config_.temperature;
  req.max_tokens = config_.max_tokens;
  req.model = config_.model;
  return client_->chat(req);
}

std::string render_instance_text(const Example& example,
                                 const Prediction& prediction) {
  return "Query: " + example.query + "\nGold answer: " + example.answer +
         "\nModel response: " + prediction.raw_output;
}

SyntheticOptimizerBackend::SyntheticOptimizerBackend(SyntheticEnv env)
    : env_(std::move(env)) {
  if (env_.rule_tokens.empty()) {
    env_.rule_tokens = SyntheticEnv::default_tokens(env_.categories);
  }
}

std::vector<std::string> SyntheticOptimizerBackend::generate_gradients(
    const std::string& current_prompt, const RenderedSample& sample) {
  (void)current_prompt;
  std::set<int> failing;
  auto note = [&](const RenderedInstance& inst) {
    if (inst.correct || inst.category.empty()) return;
    try {
      const int c = std::stoi(inst.category);
      if (c >= 0 && c < static_cast<int>(env_.rule_tokens.size())) {
        failing.insert(c);
      }
    } catch (const std::exception&) {
    }
  };
  for (const auto& [pos, neg] : sample.boundary_pairs) {
    note(pos);
    note(neg);
  }
  for (const auto& inst : sample.hard_negatives) note(inst);

  std::vector<std::string> gradients;
  for (int c : failing) {
    gradients.push_back("Add the instruction token '" + env_.rule_tokens[c] +
                        "' to the prompt so category " + std::to_string(c) +
                        " items follow their rule.");
  }
  return gradients;
}

std::vector<std::string> SyntheticOptimizerBackend::generate_candidates(
    const std::string& current_prompt, const std::string& gradient_text) {
  std::string token;
  const auto open = gradient_text.find('\'');
  if (open != std::string::npos) {
    const auto close = gradient_text.find('\'', open + 1);
    if (close != std::string::npos) {
      token = gradient_text.substr(open + 1, close - open - 1);
    }
  }

  std::vector<std::string> candidates;
  if (token.empty() || current_prompt.find(token) != std::string::npos) {
    // nothing new to add; hand back the prompt unchanged
    candidates.push_back(current_prompt);
  } else {
    candidates.push_back(current_prompt + " " + token);
  }
  const std::string variant_suffix = " Stay focused on the stated rules.";
  if (current_prompt.find(variant_suffix) == std::string::npos) {
    candidates.push_back(current_prompt + variant_suffix);
  } else {
    candidates.push_back(current_prompt);
  }
  return candidates;
}

OptimizerTemplates load_optimizer_templates(const std::string& templates_dir) {
  OptimizerTemplates t;
  t.gradient_prompt = load_text_file(templates_dir + "/gradient_prompt.txt");
  t.candidate_prompt = load_text_file(templates_dir + "/candidate_prompt.txt");
  return t;
}

RemoteOptimizerBackend::RemoteOptimizerBackend(std::shared_ptr<ChatClient> client,
                                               ChatModelConfig config,
                                               OptimizerTemplates templates,
                                               int retries)
    : client_(std::move(client)),
      config_(std::move(config)),
      templates_(std::move(templates)),
      retries_(retries) {}

namespace {

constexpr const char* kEmptySectionNote =
    "(No samples of this type for this cluster.)";

std::string render_pairs_section(const RenderedSample& sample) {
  if (sample.boundary_pairs.empty()) return kEmptySectionNote;
  std::string out;
  for (const auto& [pos, neg] : sample.boundary_pairs) {
    out += "- [SIMILAR & CORRECT]: " + pos.text + "\n";
    out += "- [SIMILAR & INCORRECT]: " + neg.text + "\n";
    out +=
        "- Analysis Point: Identify the exact missing constraint that caused "
        "the failure in the second case.\n";
  }
  out.pop_back();
  return out;
}

std::string render_failures_section(const RenderedSample& sample) {
  if (sample.hard_negatives.empty()) return kEmptySectionNote;
  std::string out;
  for (const auto& inst : sample.hard_negatives) {
    out += "- Failure Case: " + inst.text + "\n";
  }
  out.pop_back();
  return out;
}

std::string render_anchors_section(const RenderedSample& sample) {
  if (sample.anchors.empty()) return kEmptySectionNote;
  std::string out;
  for (const auto& inst : sample.anchors) {
    out += "- Anchor Case: " + inst.text + "\n";
  }
  out.pop_back();
  return out;
}

}  // namespace

std::string RemoteOptimizerBackend::fill_gradient_template(
    const std::string& current_prompt, const RenderedSample& sample) const {
  return substitute(templates_.gradient_prompt,
                    {{"current_prompt", current_prompt},
                     {"boundary_pairs", render_pairs_section(sample)},
                     {"hard_negatives", render_failures_section(sample)},
                     {"anchors", render_anchors_section(sample)}});
}

std::string RemoteOptimizerBackend::fill_candidate_template(
    const std::string& current_prompt, const std::string& gradient_text) const {
  return substitute(templates_.candidate_prompt,
                    {{"prompt", current_prompt},
                     {"new_constraint", gradient_text}});
}

std::vector<std::string> RemoteOptimizerBackend::ask_for_spans(
    const std::string& user_message) {
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    ChatRequest req;
    req.user = user_message;
    req.temperature = config_.temperature;
    req.max_tokens = config_.max_tokens;
    req.model = config_.model;
    const std::string reply = client_->chat(req);
    auto spans = parse_tagged_spans(reply);
    if (!spans.empty()) {
      return spans;
    }
  }
  std::cerr << "[warn] optimizer reply had no parsable <START>/<END> spans "
               "after retries; continuing without it\n";
  return {};
}

std::vector<std::string> RemoteOptimizerBackend::generate_gradients(
    const std::string& current_prompt, const RenderedSample& sample) {
  if (sample.instance_count() == 0) {
    throw BackendError("generate_gradients: sample renders no instances", false);
  }
  return ask_for_spans(fill_gradient_template(current_prompt, sample));
}

std::vector<std::string> RemoteOptimizerBackend::generate_candidates(
    const std::string& current_prompt, const std::string& gradient_text) {
  return ask_for_spans(fill_candidate_template(current_prompt, gradient_text));
}

Prediction predict(const std::string& prompt, const Example& example,
                   TaskBackend& backend, const DatasetSpec& spec) {
  return grade(example, backend.generate(prompt, example), spec);
}

}  // namespace pevo
