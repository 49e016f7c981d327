#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "promptevo/evaluation.hpp"
#include "promptevo/http_client.hpp"
#include "promptevo/types.hpp"

namespace pevo {

struct ChatRequest {
  std::string system;  // may be empty
  std::string user;    // must be non-empty
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string model;
};

// Raw text-in/text-out chat surface; remote impl plus scripted fakes in tests.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string chat(const ChatRequest& request) = 0;
};

struct ChatModelConfig {
  std::string base_url;
  std::string model;
  std::string api_key_env;
  double temperature = 0.0;
  int max_tokens = 1024;
};

// OpenAI-compatible: POST {base_url}/chat/completions, reads
// choices[0].message.content.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::string base_url, std::string api_key_env,
                 RetryPolicy policy);

  std::string chat(const ChatRequest& request) override;

 private:
  std::string base_url_;
  std::string api_key_env_;
  RetryPolicy policy_;
};

// Closed-world task environment: C categories, one rule token each. A
// prediction is correct with probability p_hit when the prompt contains the
// example's category token, p_miss otherwise. Outcome draws are keyed by
// (env seed, prompt token-subset signature, example id), which makes a
// prompt's accuracy a pure function of which tokens it contains.
struct SyntheticEnv {
  std::vector<std::string> rule_tokens;
  int categories = 5;
  double p_hit = 0.95;
  double p_miss = 0.35;
  std::uint64_t seed = 0;

  static std::vector<std::string> default_tokens(int categories);

  bool contains_token(const std::string& prompt, int category) const;
  std::uint64_t token_signature(const std::string& prompt) const;

  // Round-robin categories; ids are "{prefix}{i}".
  std::vector<Example> make_examples(int count,
                                     const std::string& id_prefix = "") const;
};

void write_jsonl(const std::vector<Example>& examples, const std::string& path);

class TaskBackend {
 public:
  virtual ~TaskBackend() = default;
  // raw completion text for (prompt, example)
  virtual std::string generate(const std::string& prompt,
                               const Example& example) = 0;
};

class SyntheticTaskBackend : public TaskBackend {
 public:
  explicit SyntheticTaskBackend(SyntheticEnv env);

  std::string generate(const std::string& prompt, const Example& example) override;

  const SyntheticEnv& env() const { return env_; }

 private:
  SyntheticEnv env_;
};

class RemoteTaskBackend : public TaskBackend {
 public:
  RemoteTaskBackend(std::shared_ptr<ChatClient> client, ChatModelConfig config);

  std::string generate(const std::string& prompt, const Example& example) override;

 private:
  std::shared_ptr<ChatClient> client_;
  ChatModelConfig config_;
};

struct RenderedInstance {
  std::string example_id;
  std::string category;  // from metadata, may be empty
  bool correct = false;
  std::string text;
};

struct RenderedSample {
  std::vector<std::pair<RenderedInstance, RenderedInstance>> boundary_pairs;
  std::vector<RenderedInstance> hard_negatives;
  std::vector<RenderedInstance> anchors;

  bool has_failures() const {
    return !hard_negatives.empty() || !boundary_pairs.empty();
  }
  std::size_t instance_count() const {
    return 2 * boundary_pairs.size() + hard_negatives.size() + anchors.size();
  }
};

std::string render_instance_text(const Example& example,
                                 const Prediction& prediction);

// Produces improvement directions and prompt rewrites.
class OptimizerBackend {
 public:
  virtual ~OptimizerBackend() = default;

  virtual std::vector<std::string> generate_gradients(
      const std::string& current_prompt, const RenderedSample& sample) = 0;

  virtual std::vector<std::string> generate_candidates(
      const std::string& current_prompt, const std::string& gradient_text) = 0;
};

// Scripted analogue used with the synthetic env: one gradient per failure
// category in the sample, and candidates formed by appending the token the
// gradient names (plus one token-neutral variant).
class SyntheticOptimizerBackend : public OptimizerBackend {
 public:
  explicit SyntheticOptimizerBackend(SyntheticEnv env);

  std::vector<std::string> generate_gradients(
      const std::string& current_prompt, const RenderedSample& sample) override;

  std::vector<std::string> generate_candidates(
      const std::string& current_prompt, const std::string& gradient_text) override;

 private:
  SyntheticEnv env_;
};

struct OptimizerTemplates {
  std::string gradient_prompt;
  std::string candidate_prompt;
};

OptimizerTemplates load_optimizer_templates(const std::string& templates_dir);

// Fills the meta-prompt templates, calls the chat model, and parses the
// <START>/<END> spans out of the reply. A reply with zero parsable spans is
// retried up to `retries` more times, then surfaces as an empty list.
class RemoteOptimizerBackend : public OptimizerBackend {
 public:
  RemoteOptimizerBackend(std::shared_ptr<ChatClient> client,
                         ChatModelConfig config, OptimizerTemplates templates,
                         int retries);

  std::vector<std::string> generate_gradients(
      const std::string& current_prompt, const RenderedSample& sample) override;

  std::vector<std::string> generate_candidates(
      const std::string& current_prompt, const std::string& gradient_text) override;

  // exposed for tests: exact text sent as the user message
  std::string fill_gradient_template(const std::string& current_prompt,
                                     const RenderedSample& sample) const;
  std::string fill_candidate_template(const std::string& current_prompt,
                                      const std::string& gradient_text) const;

 private:
  std::vector<std::string> ask_for_spans(const std::string& user_message);

  std::shared_ptr<ChatClient> client_;
  ChatModelConfig config_;
  OptimizerTemplates templates_;
  int retries_;
};

// Composition used by the evolution loop: generate then grade.
Prediction predict(const std::string& prompt, const Example& example,
                   TaskBackend& backend, const DatasetSpec& spec);

}  // namespace pevo
