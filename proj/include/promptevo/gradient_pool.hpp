#pragma once

#include <vector>

#include "promptevo/embedding.hpp"
#include "promptevo/rng.hpp"
#include "promptevo/types.hpp"

namespace pevo {

struct GradientPool {
  std::vector<TextualGradient> entries;
  double gamma = 0.9;
  int cap = 500;
  double min_weight = 0.01;
};

// Recomputes every current_weight as initial * gamma^(t - birth). Computing
// from the birth iteration rather than multiplying in place makes repeated
// decays to the same t idempotent and stepwise decay composable.
void decay(GradientPool& pool, int t);

// Decays existing entries to t, appends the fresh ones (which must carry
// birth_iteration == t and weight 1.0), drops entries below min_weight, then
// enforces the cap by dropping the lowest weights (ties: oldest birth, then
// smallest id). Duplicate ids are an error.
void admit(GradientPool& pool, std::vector<TextualGradient> fresh, int t);

struct RefinedGradients {
  struct Cluster {
    double weight = 0.0;  // sum of member current_weights
    std::vector<TextualGradient> top;
  };
  std::vector<Cluster> clusters;  // descending by weight
};

// Clusters entry embeddings into min(max_clusters, |entries|) groups and
// keeps the top_n heaviest entries of each (ties: newer birth, then smaller
// id). Clustering itself is unweighted; weights only rank and aggregate.
// Missing entry embeddings are computed via the encoder and cached.
RefinedGradients refine(GradientPool& pool, int max_clusters, int top_n,
                        Encoder& encoder, Rng& rng);

}  // namespace pevo
