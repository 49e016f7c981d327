#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pevo {

struct Example {
  std::string id;
  std::string query;  // must be non-empty
  std::string answer;
  std::map<std::string, std::string> metadata;

  bool operator==(const Example&) const = default;
};

struct Prediction {
  std::string example_id;
  std::string raw_output;
  std::string extracted_answer;
  bool correct = false;
  double score = 0.0;  // in [0, 1]; correct iff score == 1 under binary scorers

  bool operator==(const Prediction&) const = default;
};

struct EmbeddedInstance {
  std::string example_id;
  std::vector<double> embedding;  // unit norm
  bool correct = false;

  bool operator==(const EmbeddedInstance&) const = default;
};

struct TextualGradient {
  std::string id;
  std::string text;
  double initial_weight = 1.0;
  int birth_iteration = 0;
  double current_weight = 1.0;
  std::optional<int> source_cluster;
  std::vector<double> embedding;  // cached lazily; empty until first needed

  bool operator==(const TextualGradient&) const = default;
};

struct CandidateStats {
  std::string prompt_text;
  std::optional<std::string> parent_id;
  std::optional<std::string> source_gradient_id;
  int pulls = 0;
  double score_sum = 0.0;  // invariant: score_sum <= pulls

  double mean() const { return pulls > 0 ? score_sum / pulls : 0.0; }

  bool operator==(const CandidateStats&) const = default;
};

// Defaults are the engine's reference operating point; tests pin them.
struct RunConfig {
  int batch_size = 128;
  int iterations = 20;
  int beam_width = 4;
  int candidates_per_iter = 10;
  int total_quota = 30;
  int instance_clusters = 14;
  int gradient_clusters = 10;
  double decay = 0.9;
  double ucb_alpha = 1.0;
  int top_n_per_cluster = 2;
  std::uint64_t seed = 42;
  int eval_minibatch = 16;
  int ucb_budget = 320;
  double pool_min_weight = 0.01;
  int pool_cap = 500;
  int parallelism = 8;
  int retries = 3;

  bool operator==(const RunConfig&) const = default;
};

struct BeamEntry {
  std::string prompt;
  double score = 0.0;

  bool operator==(const BeamEntry&) const = default;
};

struct RngState {
  std::uint64_t root_seed = 0;

  bool operator==(const RngState&) const = default;
};

struct RunState {
  int iteration = 0;
  std::vector<BeamEntry> beam;  // sorted by score desc, stable on ties
  std::vector<TextualGradient> pool;
  std::int64_t bandit_total = 0;
  RngState rng;
  std::string best_prompt;
  double best_score = 0.0;

  bool operator==(const RunState&) const = default;
};

}  // namespace pevo
