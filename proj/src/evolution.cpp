#include "promptevo/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "promptevo/checkpoint.hpp"
#include "promptevo/clustering.hpp"
#include "promptevo/parallel.hpp"
#include "promptevo/sampling.hpp"

namespace pevo {

double ucb_value(const CandidateStats& stats, std::int64_t total,
                 double alpha) {
  if (alpha < 0.0) {
    throw std::invalid_argument("ucb_value: alpha must be non-negative");
  }
  if (stats.pulls < 0) {
    throw std::invalid_argument("ucb_value: negative pull count");
  }
  if (stats.pulls == 0) {
    return std::numeric_limits<double>::infinity();
  }
  if (total < stats.pulls) {
    throw std::invalid_argument("ucb_value: total pulls below this arm's");
  }
  return stats.mean() +
         alpha * std::sqrt(std::log(static_cast<double>(total)) /
                           static_cast<double>(stats.pulls));
}

UcbOutcome ucb_select(std::vector<CandidateStats> candidates,
                      const std::vector<Example>& eval_pool, int budget,
                      int minibatch, int top_w, double alpha,
                      std::int64_t prior_total, const MinibatchScorer& scorer,
                      Rng& rng) {
  if (candidates.empty()) {
    throw std::invalid_argument("ucb_select: empty candidate set");
  }
  if (budget < 0) {
    throw std::invalid_argument("ucb_select: negative budget");
  }
  if (minibatch < 1) {
    throw std::invalid_argument("ucb_select: minibatch must be >= 1");
  }
  if (top_w < 1) {
    throw std::invalid_argument("ucb_select: top_w must be >= 1");
  }
  if (alpha < 0.0) {
    throw std::invalid_argument("ucb_select: alpha must be non-negative");
  }
  if (prior_total < 0) {
    throw std::invalid_argument("ucb_select: negative prior pull total");
  }
  if (static_cast<std::size_t>(minibatch) > eval_pool.size()) {
    throw std::invalid_argument("ucb_select: minibatch exceeds the eval pool");
  }

  struct Deck {
    std::vector<std::size_t> order;
    std::size_t pos = 0;
  };
  std::vector<Deck> decks(candidates.size());
  const std::size_t mb = static_cast<std::size_t>(minibatch);

  auto draw = [&](Deck& deck) {
    if (deck.order.size() - deck.pos < mb) {
      deck.order.resize(eval_pool.size());
      std::iota(deck.order.begin(), deck.order.end(), std::size_t{0});
      rng.shuffle(deck.order);
      deck.pos = 0;
    }
    std::vector<const Example*> out(mb);
    for (std::size_t j = 0; j < mb; ++j) {
      out[j] = &eval_pool[deck.order[deck.pos + j]];
    }
    deck.pos += mb;
    return out;
  };

  int pulls = 0;
  long long spent = 0;
  while (spent < budget) {
    const std::int64_t total = prior_total + pulls;
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double v = ucb_value(candidates[i], total, alpha);
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    const auto batch = draw(decks[best]);
    const double score = scorer(candidates[best].prompt_text, batch);
    candidates[best].pulls += 1;
    candidates[best].score_sum += score;
    spent += minibatch;
    ++pulls;
  }

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const auto& lhs = candidates[a];
                     const auto& rhs = candidates[b];
                     if (lhs.mean() != rhs.mean()) {
                       return lhs.mean() > rhs.mean();
                     }
                     return lhs.pulls > rhs.pulls;
                   });

  UcbOutcome outcome;
  const std::size_t keep =
      std::min<std::size_t>(static_cast<std::size_t>(top_w), order.size());
  outcome.selected.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    outcome.selected.push_back(candidates[order[i]]);
  }
  outcome.all = std::move(candidates);
  outcome.pulls = pulls;
  return outcome;
}

std::string prompt_digest(const std::string& prompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(prompt)));
  return std::string(buf);
}

namespace {

nlohmann::ordered_json trace_to_json(const IterationTrace& trace) {
  nlohmann::ordered_json j;
  j["iteration"] = trace.iteration;
  j["batch_accuracy"] = trace.batch_accuracy;
  j["clusters"] = nlohmann::ordered_json::array();
  for (const auto& c : trace.clusters) {
    j["clusters"].push_back({{"id", c.id},
                             {"size", c.size},
                             {"error_rate", c.error_rate},
                             {"quota", c.quota}});
  }
  j["gradients_admitted"] = trace.gradients_admitted;
  j["pool_size"] = trace.pool_size;
  j["candidates_generated"] = trace.candidates_generated;
  j["ucb_pulls"] = trace.ucb_pulls;
  j["leader_holdout_score"] = trace.leader_holdout_score;
  j["beam"] = nlohmann::ordered_json::array();
  for (const auto& b : trace.beam) {
    j["beam"].push_back({{"digest", b.digest}, {"score", b.score}});
  }
  return j;
}

IterationTrace trace_from_json(const nlohmann::ordered_json& j) {
  IterationTrace trace;
  trace.iteration = j.at("iteration").get<int>();
  trace.batch_accuracy = j.at("batch_accuracy").get<double>();
  for (const auto& c : j.at("clusters")) {
    IterationTrace::ClusterLine line;
    line.id = c.at("id").get<int>();
    line.size = c.at("size").get<int>();
    line.error_rate = c.at("error_rate").get<double>();
    line.quota = c.at("quota").get<int>();
    trace.clusters.push_back(std::move(line));
  }
  trace.gradients_admitted = j.at("gradients_admitted").get<int>();
  trace.pool_size = j.at("pool_size").get<int>();
  trace.candidates_generated = j.at("candidates_generated").get<int>();
  trace.ucb_pulls = j.at("ucb_pulls").get<int>();
  trace.leader_holdout_score = j.at("leader_holdout_score").get<double>();
  for (const auto& b : j.at("beam")) {
    IterationTrace::BeamLine line;
    line.digest = b.at("digest").get<std::string>();
    line.score = b.at("score").get<double>();
    trace.beam.push_back(std::move(line));
  }
  return trace;
}

}  // namespace

std::string trace_to_json_line(const IterationTrace& trace) {
  return trace_to_json(trace).dump();
}

IterationTrace trace_from_json_line(const std::string& line) {
  const auto j = nlohmann::ordered_json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw std::runtime_error("trace line is not a JSON object");
  }
  return trace_from_json(j);
}

Engine::Engine(RunConfig run, DatasetSpec dataset_spec,
               std::vector<Example> train, std::vector<Example> test,
               std::shared_ptr<Encoder> encoder,
               std::shared_ptr<TaskBackend> task,
               std::shared_ptr<OptimizerBackend> optimizer,
               std::string output_dir, std::string initial_prompt)
    : run_(run),
      spec_(std::move(dataset_spec)),
      train_(std::move(train)),
      test_(std::move(test)),
      encoder_(std::move(encoder)),
      task_(std::move(task)),
      optimizer_(std::move(optimizer)),
      output_dir_(std::move(output_dir)),
      initial_prompt_(std::move(initial_prompt)) {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(run_.batch_size >= 1, "batch_size must be >= 1");
  require(run_.iterations >= 0, "iterations must be >= 0");
  require(run_.beam_width >= 1, "beam_width must be >= 1");
  require(run_.candidates_per_iter >= 1, "candidates_per_iter must be >= 1");
  require(run_.total_quota >= 1, "total_quota must be >= 1");
  require(run_.instance_clusters >= 1, "instance_clusters must be >= 1");
  require(run_.gradient_clusters >= 1, "gradient_clusters must be >= 1");
  require(run_.decay > 0.0 && run_.decay <= 1.0, "decay must be in (0, 1]");
  require(run_.ucb_alpha >= 0.0, "ucb_alpha must be >= 0");
  require(run_.top_n_per_cluster >= 1, "top_n_per_cluster must be >= 1");
  require(run_.eval_minibatch >= 1, "eval_minibatch must be >= 1");
  require(run_.ucb_budget >= 0, "ucb_budget must be >= 0");
  require(run_.pool_min_weight >= 0.0, "pool_min_weight must be >= 0");
  require(run_.pool_cap >= 1, "pool_cap must be >= 1");
  require(run_.parallelism >= 1, "parallelism must be >= 1");
  require(run_.retries >= 0, "retries must be >= 0");
  require(!initial_prompt_.empty(), "initial prompt must be non-empty");
  require(encoder_ != nullptr, "encoder is required");
  require(task_ != nullptr, "task backend is required");
  require(optimizer_ != nullptr, "optimizer backend is required");
  require(!output_dir_.empty(), "output dir is required");

  if (train_.empty()) {
    throw DatasetError("train split is empty");
  }
  if (spec_.eval_fraction <= 0.0 || spec_.eval_fraction >= 1.0) {
    throw DatasetError("eval_fraction must be in (0, 1)");
  }
  const std::size_t n = train_.size();
  const std::size_t eval_count = std::max<std::size_t>(
      static_cast<std::size_t>(run_.eval_minibatch),
      static_cast<std::size_t>(
          std::llround(spec_.eval_fraction * static_cast<double>(n))));
  if (eval_count >= n) {
    throw DatasetError(
        "train split too small: the held-out slice (" +
        std::to_string(eval_count) +
        " examples) would leave nothing to sample batches from");
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng split_rng(run_.seed, "eval_split");
  split_rng.shuffle(idx);
  eval_slice_.reserve(eval_count);
  batch_pool_.reserve(n - eval_count);
  for (std::size_t i = 0; i < n; ++i) {
    (i < eval_count ? eval_slice_ : batch_pool_).push_back(train_[idx[i]]);
  }
}

std::vector<Prediction> Engine::predict_many(
    const std::string& prompt, const std::vector<const Example*>& examples) {
  return parallel_map(examples.size(), run_.parallelism, [&](std::size_t i) {
    return predict(prompt, *examples[i], *task_, spec_);
  });
}

double Engine::evaluate_prompt(const std::string& prompt,
                               const std::vector<Example>& examples) {
  std::vector<const Example*> ptrs(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) ptrs[i] = &examples[i];
  const auto preds = predict_many(prompt, ptrs);
  return dataset_metric(examples, preds, spec_);
}

Engine::IterationOutcome Engine::run_iteration(const RunState& state, int t) {
  if (state.beam.empty()) {
    throw std::invalid_argument("run_iteration: beam must be non-empty");
  }

  // batch of the iteration, id-sorted so nothing downstream depends on
  // sampling order or completion order
  Rng batch_rng(run_.seed, "batch:" + std::to_string(t));
  std::vector<std::size_t> idx(batch_pool_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  batch_rng.shuffle(idx);
  const std::size_t take = std::min<std::size_t>(
      static_cast<std::size_t>(run_.batch_size), batch_pool_.size());
  std::vector<const Example*> batch(take);
  for (std::size_t i = 0; i < take; ++i) batch[i] = &batch_pool_[idx[i]];
  std::sort(batch.begin(), batch.end(),
            [](const Example* a, const Example* b) { return a->id < b->id; });

  const std::string& leader = state.beam.front().prompt;
  const auto preds = predict_many(leader, batch);
  double score_sum = 0.0;
  for (const auto& p : preds) score_sum += p.score;
  const double batch_accuracy = score_sum / static_cast<double>(take);

  // embed, cluster, and budget the failure analysis
  std::vector<std::string> texts(take);
  for (std::size_t i = 0; i < take; ++i) {
    texts[i] = instance_text(*batch[i], preds[i]);
  }
  const auto vectors = encoder_->embed_batch(texts);

  Rng kmeans_rng(run_.seed, "kmeans:" + std::to_string(t));
  const auto clusters = kmeans(vectors, run_.instance_clusters, kmeans_rng);
  std::vector<bool> correctness(take);
  for (std::size_t i = 0; i < take; ++i) correctness[i] = preds[i].correct;
  const auto rates = error_rates(clusters, correctness);
  const auto quotas = allocate_quotas(rates, run_.total_quota);

  const std::size_t k_eff = clusters.centroids.size();
  std::vector<std::vector<std::size_t>> member_idx(k_eff);
  for (std::size_t i = 0; i < take; ++i) {
    member_idx[static_cast<std::size_t>(clusters.assignments[i])].push_back(i);
  }

  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < take; ++i) index_of.emplace(batch[i]->id, i);
  auto rendered_of = [&](const std::string& id) {
    const std::size_t i = index_of.at(id);
    RenderedInstance r;
    r.example_id = id;
    const auto it = batch[i]->metadata.find("category");
    if (it != batch[i]->metadata.end()) r.category = it->second;
    r.correct = preds[i].correct;
    r.text = render_instance_text(*batch[i], preds[i]);
    return r;
  };

  // prompt-improvement directions, one optimizer call per failing cluster
  std::vector<TextualGradient> fresh;
  for (std::size_t k = 0; k < k_eff; ++k) {
    bool any_failure = false;
    std::vector<MemberView> members;
    members.reserve(member_idx[k].size());
    for (std::size_t i : member_idx[k]) {
      members.push_back(MemberView{batch[i]->id, vectors[i], preds[i].correct});
      any_failure = any_failure || !preds[i].correct;
    }
    if (members.empty() || !any_failure) continue;

    const auto sample =
        select_tripartite(members, clusters.centroids[k],
                          quotas[static_cast<std::size_t>(k)]);
    if (!sample.has_failures()) continue;

    RenderedSample rendered;
    for (const auto& [pos_id, neg_id] : sample.boundary_pairs) {
      rendered.boundary_pairs.emplace_back(rendered_of(pos_id),
                                           rendered_of(neg_id));
    }
    for (const auto& id : sample.hard_negatives) {
      rendered.hard_negatives.push_back(rendered_of(id));
    }
    for (const auto& id : sample.anchors) {
      rendered.anchors.push_back(rendered_of(id));
    }

    const auto texts_out = optimizer_->generate_gradients(leader, rendered);
    for (std::size_t j = 0; j < texts_out.size(); ++j) {
      TextualGradient g;
      g.id = "t" + std::to_string(t) + "-c" + std::to_string(k) + "-g" +
             std::to_string(j);
      g.text = texts_out[j];
      g.initial_weight = 1.0;
      g.birth_iteration = t;
      g.current_weight = 1.0;
      g.source_cluster = static_cast<int>(k);
      fresh.push_back(std::move(g));
    }
  }

  // pool bookkeeping: decay happens inside admit, then refinement groups the
  // surviving directions
  GradientPool pool{state.pool, run_.decay, run_.pool_cap,
                    run_.pool_min_weight};
  const int admitted = static_cast<int>(fresh.size());
  admit(pool, std::move(fresh), t);

  RefinedGradients refined;
  if (!pool.entries.empty()) {
    Rng pool_rng(run_.seed, "gpool:" + std::to_string(t));
    refined = refine(pool, run_.gradient_clusters, run_.top_n_per_cluster,
                     *encoder_, pool_rng);
  }

  // candidate prompts: beam carried over, then rewrites in a round-robin over
  // the refined direction groups, rotating which beam member gets rewritten
  std::vector<const TextualGradient*> visits;
  std::size_t deepest = 0;
  for (const auto& c : refined.clusters) {
    deepest = std::max(deepest, c.top.size());
  }
  for (std::size_t r = 0; r < deepest; ++r) {
    for (const auto& c : refined.clusters) {
      if (r < c.top.size()) visits.push_back(&c.top[r]);
    }
  }

  std::vector<CandidateStats> candidates;
  std::unordered_set<std::string> seen;
  for (const auto& entry : state.beam) {
    CandidateStats cs;
    cs.prompt_text = entry.prompt;
    candidates.push_back(std::move(cs));
    seen.insert(entry.prompt);
  }
  const std::size_t beam_size = state.beam.size();
  int novel = 0;
  for (std::size_t pass = 0;
       pass < beam_size && novel < run_.candidates_per_iter; ++pass) {
    for (std::size_t vi = 0;
         vi < visits.size() && novel < run_.candidates_per_iter; ++vi) {
      const auto& parent = state.beam[(vi + pass) % beam_size];
      const auto rewrites =
          optimizer_->generate_candidates(parent.prompt, visits[vi]->text);
      for (const auto& text : rewrites) {
        if (novel >= run_.candidates_per_iter) break;
        if (!seen.insert(text).second) continue;
        CandidateStats cs;
        cs.prompt_text = text;
        cs.parent_id = prompt_digest(parent.prompt);
        cs.source_gradient_id = visits[vi]->id;
        candidates.push_back(std::move(cs));
        ++novel;
      }
    }
  }

  // bandit selection of the next beam on the held-out slice
  Rng ucb_rng(run_.seed, "ucb:" + std::to_string(t));
  MinibatchScorer scorer = [this](const std::string& prompt,
                                  const std::vector<const Example*>& mb) {
    const auto mb_preds = predict_many(prompt, mb);
    std::vector<Example> owned;
    owned.reserve(mb.size());
    for (const Example* e : mb) owned.push_back(*e);
    return dataset_metric(owned, mb_preds, spec_);
  };
  const auto outcome =
      ucb_select(std::move(candidates), eval_slice_, run_.ucb_budget,
                 run_.eval_minibatch, run_.beam_width, run_.ucb_alpha,
                 state.bandit_total, scorer, ucb_rng);

  RunState next = state;
  next.iteration = t;
  next.bandit_total = state.bandit_total + outcome.pulls;
  next.pool = std::move(pool.entries);
  next.beam.clear();
  for (const auto& cs : outcome.selected) {
    next.beam.push_back(BeamEntry{cs.prompt_text, cs.mean()});
  }

  const double leader_holdout =
      evaluate_prompt(next.beam.front().prompt, eval_slice_);
  if (leader_holdout > next.best_score) {
    next.best_score = leader_holdout;
    next.best_prompt = next.beam.front().prompt;
  }

  IterationTrace trace;
  trace.iteration = t;
  trace.batch_accuracy = batch_accuracy;
  for (std::size_t k = 0; k < k_eff; ++k) {
    trace.clusters.push_back(IterationTrace::ClusterLine{
        static_cast<int>(k), static_cast<int>(member_idx[k].size()), rates[k],
        quotas[k]});
  }
  trace.gradients_admitted = admitted;
  trace.pool_size = static_cast<int>(next.pool.size());
  trace.candidates_generated = novel;
  trace.ucb_pulls = outcome.pulls;
  trace.leader_holdout_score = leader_holdout;
  for (const auto& entry : next.beam) {
    trace.beam.push_back(
        IterationTrace::BeamLine{prompt_digest(entry.prompt), entry.score});
  }

  return IterationOutcome{std::move(next), std::move(trace)};
}

std::string Engine::checkpoint_path() const {
  return output_dir_ + "/checkpoint.json";
}

std::string Engine::trace_path() const { return output_dir_ + "/trace.jsonl"; }

std::string Engine::report_path() const {
  return output_dir_ + "/report.json";
}

void Engine::set_config_echo(std::string config_json) {
  config_echo_ = std::move(config_json);
}

RunState Engine::fresh_state(double baseline) const {
  RunState state;
  state.iteration = 0;
  state.beam = {BeamEntry{initial_prompt_, baseline}};
  state.bandit_total = 0;
  state.rng.root_seed = run_.seed;
  state.best_prompt = initial_prompt_;
  state.best_score = baseline;
  return state;
}

std::vector<IterationTrace> Engine::rewind_trace_file(
    int max_iteration) const {
  std::vector<IterationTrace> kept;
  std::vector<std::string> lines;
  {
    std::ifstream in(trace_path(), std::ios::binary);
    if (!in) return kept;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        IterationTrace trace = trace_from_json_line(line);
        if (trace.iteration > max_iteration) continue;
        kept.push_back(std::move(trace));
        lines.push_back(line);
      } catch (const std::exception&) {
        // torn write from an interrupted run: drop the line
      }
    }
  }
  std::ofstream out(trace_path(), std::ios::binary | std::ios::trunc);
  for (const auto& line : lines) out << line << '\n';
  return kept;
}

void Engine::append_trace_line(const std::string& line) const {
  std::ofstream out(trace_path(), std::ios::binary | std::ios::app);
  if (!out) {
    throw CheckpointIoError("cannot append to trace file: " + trace_path());
  }
  out << line << '\n';
}

void Engine::write_report(const OptimizeReport& report) const {
  nlohmann::ordered_json j;
  j["best_prompt"] = report.best_prompt;
  j["best_score"] = report.best_score;
  j["baseline_score"] = report.baseline_score;
  j["final_prompt"] = report.final_prompt;
  j["final_beam"] = nlohmann::ordered_json::array();
  for (const auto& entry : report.final_beam) {
    j["final_beam"].push_back(
        {{"prompt", entry.prompt}, {"score", entry.score}});
  }
  j["iterations"] = nlohmann::ordered_json::array();
  for (const auto& trace : report.iterations) {
    j["iterations"].push_back(trace_to_json(trace));
  }
  if (!config_echo_.empty()) {
    const auto echo =
        nlohmann::ordered_json::parse(config_echo_, nullptr, false);
    j["config"] = echo.is_discarded() ? nlohmann::ordered_json(config_echo_)
                                      : echo;
  }
  std::ofstream out(report_path(), std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointIoError("cannot write report: " + report_path());
  }
  out << j.dump(2) << '\n';
}

OptimizeReport Engine::optimize(bool resume) {
  std::filesystem::create_directories(output_dir_);

  const double baseline = evaluate_prompt(initial_prompt_, eval_slice_);

  RunState state;
  std::vector<IterationTrace> traces;
  if (resume) {
    state = load_checkpoint(checkpoint_path());
    if (state.rng.root_seed != run_.seed) {
      throw CheckpointSchemaError(
          "checkpoint was produced with seed " +
          std::to_string(state.rng.root_seed) + " but the run is configured " +
          "with seed " + std::to_string(run_.seed));
    }
    traces = rewind_trace_file(state.iteration);
  } else {
    state = fresh_state(baseline);
    std::ofstream(trace_path(), std::ios::binary | std::ios::trunc);
  }

  for (int t = state.iteration + 1; t <= run_.iterations; ++t) {
    int attempt = 0;
    for (;;) {
      try {
        auto out = run_iteration(state, t);
        state = std::move(out.state);
        append_trace_line(trace_to_json_line(out.trace));
        traces.push_back(std::move(out.trace));
        save_checkpoint(state, checkpoint_path());
        break;
      } catch (const BackendError& e) {
        if (++attempt > run_.retries) throw;
        std::cerr << "[warn] iteration " << t << " aborted (" << e.what()
                  << "); rolled back, retry " << attempt << "/" << run_.retries
                  << "\n";
      } catch (const EncoderError& e) {
        if (++attempt > run_.retries) throw;
        std::cerr << "[warn] iteration " << t << " aborted (" << e.what()
                  << "); rolled back, retry " << attempt << "/" << run_.retries
                  << "\n";
      }
    }
  }

  OptimizeReport report;
  report.best_prompt = state.best_prompt;
  report.best_score = state.best_score;
  report.baseline_score = baseline;
  report.final_prompt = state.beam.front().prompt;
  report.final_beam = state.beam;
  report.iterations = std::move(traces);
  write_report(report);
  return report;
}

}  // namespace pevo
