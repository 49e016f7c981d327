#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "promptevo/backends.hpp"
#include "promptevo/embedding.hpp"
#include "promptevo/evaluation.hpp"
#include "promptevo/gradient_pool.hpp"
#include "promptevo/rng.hpp"
#include "promptevo/types.hpp"

namespace pevo {

// Exploration-adjusted score: mean + alpha * sqrt(ln(total) / pulls).
// An arm with zero pulls reads +infinity so every arm is tried before any is
// repeated. `total` counts pulls across all arms (cumulative across
// iterations) and must be >= 1 whenever this arm has pulls.
double ucb_value(const CandidateStats& stats, std::int64_t total,
                 double alpha);

// Scores one prompt on one minibatch; must be deterministic for reproducible
// runs. The examples stay owned by the caller.
using MinibatchScorer = std::function<double(
    const std::string& prompt, const std::vector<const Example*>& minibatch)>;

struct UcbOutcome {
  std::vector<CandidateStats> selected;  // best first, at most top_w entries
  std::vector<CandidateStats> all;       // insertion order, final stats
  int pulls = 0;
};

// Bandit loop: while spent < budget, pull the argmax-value arm (value ties
// keep the earliest arm), scoring it on a fresh minibatch drawn without
// replacement from a per-arm shuffled deck (the full deck reshuffles when
// fewer than `minibatch` cards remain). Ranking of the final top_w: mean
// desc, then more pulls, then insertion order. budget == 0 ranks on prior
// means alone. prior_total seeds the exploration term's pull total.
UcbOutcome ucb_select(std::vector<CandidateStats> candidates,
                      const std::vector<Example>& eval_pool, int budget,
                      int minibatch, int top_w, double alpha,
                      std::int64_t prior_total, const MinibatchScorer& scorer,
                      Rng& rng);

// 16-hex-digit content digest used to reference prompts in traces.
std::string prompt_digest(const std::string& prompt);

struct IterationTrace {
  struct ClusterLine {
    int id = 0;
    int size = 0;
    double error_rate = 0.0;
    int quota = 0;
  };
  struct BeamLine {
    std::string digest;
    double score = 0.0;
  };

  int iteration = 0;
  double batch_accuracy = 0.0;
  std::vector<ClusterLine> clusters;
  int gradients_admitted = 0;
  int pool_size = 0;
  int candidates_generated = 0;  // novel texts beyond the carried beam
  int ucb_pulls = 0;
  double leader_holdout_score = 0.0;
  std::vector<BeamLine> beam;
};

std::string trace_to_json_line(const IterationTrace& trace);
IterationTrace trace_from_json_line(const std::string& line);

struct OptimizeReport {
  std::string best_prompt;
  double best_score = 0.0;
  double baseline_score = 0.0;
  std::string final_prompt;  // beam leader after the last iteration
  std::vector<BeamEntry> final_beam;
  std::vector<IterationTrace> iterations;
};

// Drives the optimization loop: per iteration it samples a train batch,
// predicts with the beam leader, clusters the embedded outcomes, samples
// contrastive instances per cluster, turns them into weighted improvement
// directions, rewrites beam prompts along the refined directions, and picks
// the next beam by bandit selection on a held-out slice. State checkpoints
// after every iteration; traces append as JSONL.
class Engine {
 public:
  Engine(RunConfig run, DatasetSpec dataset_spec, std::vector<Example> train,
         std::vector<Example> test, std::shared_ptr<Encoder> encoder,
         std::shared_ptr<TaskBackend> task,
         std::shared_ptr<OptimizerBackend> optimizer, std::string output_dir,
         std::string initial_prompt);

  struct IterationOutcome {
    RunState state;
    IterationTrace trace;
  };

  // Pure relative to `state`: on throw the caller's state is untouched, which
  // is what makes retry-with-rollback a plain loop.
  IterationOutcome run_iteration(const RunState& state, int t);

  // Runs (or, with resume, continues) the full loop and writes
  // checkpoint.json, trace.jsonl, and report.json under the output dir.
  OptimizeReport optimize(bool resume);

  double evaluate_prompt(const std::string& prompt,
                         const std::vector<Example>& examples);

  std::vector<Prediction> predict_many(
      const std::string& prompt, const std::vector<const Example*>& examples);

  const std::vector<Example>& eval_slice() const { return eval_slice_; }
  const std::vector<Example>& batch_pool() const { return batch_pool_; }
  const std::vector<Example>& test_split() const { return test_; }

  std::string checkpoint_path() const;
  std::string trace_path() const;
  std::string report_path() const;

  // Verbatim JSON text echoed into report.json under "config".
  void set_config_echo(std::string config_json);

 private:
  RunState fresh_state(double baseline) const;
  std::vector<IterationTrace> rewind_trace_file(int max_iteration) const;
  void append_trace_line(const std::string& line) const;
  void write_report(const OptimizeReport& report) const;

  RunConfig run_;
  DatasetSpec spec_;
  std::vector<Example> train_;
  std::vector<Example> test_;
  std::vector<Example> eval_slice_;
  std::vector<Example> batch_pool_;
  std::shared_ptr<Encoder> encoder_;
  std::shared_ptr<TaskBackend> task_;
  std::shared_ptr<OptimizerBackend> optimizer_;
  std::string output_dir_;
  std::string initial_prompt_;
  std::string config_echo_;
};

}  // namespace pevo
