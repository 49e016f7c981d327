#include "promptevo/gradient_pool.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "promptevo/clustering.hpp"

namespace pevo {

void decay(GradientPool& pool, int t) {
  for (auto& g : pool.entries) {
    if (t < g.birth_iteration) {
      throw std::invalid_argument("decay: t precedes birth of gradient '" +
                                  g.id + "'");
    }
    g.current_weight =
        g.initial_weight * std::pow(pool.gamma, t - g.birth_iteration);
  }
}

void admit(GradientPool& pool, std::vector<TextualGradient> fresh, int t) {
  for (const auto& g : fresh) {
    if (g.birth_iteration != t) {
      throw std::invalid_argument("admit: gradient '" + g.id +
                                  "' has birth_iteration != t");
    }
    if (g.initial_weight != 1.0) {
      throw std::invalid_argument("admit: gradient '" + g.id +
                                  "' must enter with weight 1.0");
    }
  }

  decay(pool, t);
  for (auto& g : fresh) {
    g.current_weight = g.initial_weight;
    pool.entries.push_back(std::move(g));
  }

  std::unordered_set<std::string> ids;
  for (const auto& g : pool.entries) {
    if (!ids.insert(g.id).second) {
      throw std::invalid_argument("admit: duplicate gradient id '" + g.id + "'");
    }
  }

  std::erase_if(pool.entries, [&](const TextualGradient& g) {
    return g.current_weight < pool.min_weight;
  });

  if (pool.cap > 0 && static_cast<int>(pool.entries.size()) > pool.cap) {
    // rank for removal: lightest first, then oldest birth, then smallest id
    std::vector<std::size_t> order(pool.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ga = pool.entries[a];
      const auto& gb = pool.entries[b];
      if (ga.current_weight != gb.current_weight) {
        return ga.current_weight < gb.current_weight;
      }
      if (ga.birth_iteration != gb.birth_iteration) {
        return ga.birth_iteration < gb.birth_iteration;
      }
      return ga.id < gb.id;
    });
    const std::size_t excess = pool.entries.size() - static_cast<std::size_t>(pool.cap);
    std::unordered_set<std::size_t> doomed(order.begin(),
                                           order.begin() + excess);
    std::vector<TextualGradient> kept;
    kept.reserve(static_cast<std::size_t>(pool.cap));
    for (std::size_t i = 0; i < pool.entries.size(); ++i) {
      if (!doomed.count(i)) kept.push_back(std::move(pool.entries[i]));
    }
    pool.entries = std::move(kept);
  }
}

RefinedGradients refine(GradientPool& pool, int max_clusters, int top_n,
                        Encoder& encoder, Rng& rng) {
  if (pool.entries.empty()) {
    throw std::invalid_argument("refine: empty pool");
  }
  if (max_clusters < 1 || top_n < 1) {
    throw std::invalid_argument("refine: max_clusters and top_n must be positive");
  }

  std::vector<std::vector<double>> points;
  points.reserve(pool.entries.size());
  for (auto& g : pool.entries) {
    if (g.embedding.empty()) {
      g.embedding = embed_text(g.text, encoder);
    }
    points.push_back(g.embedding);
  }

  const auto clusters = kmeans(points, max_clusters, rng);
  const std::size_t k = clusters.centroids.size();

  std::vector<RefinedGradients::Cluster> built(k);
  std::vector<std::vector<std::size_t>> member_of(k);
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const int c = clusters.assignments[i];
    member_of[c].push_back(i);
    built[c].weight += pool.entries[i].current_weight;
  }

  for (std::size_t c = 0; c < k; ++c) {
    auto& members = member_of[c];
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      const auto& ga = pool.entries[a];
      const auto& gb = pool.entries[b];
      if (ga.current_weight != gb.current_weight) {
        return ga.current_weight > gb.current_weight;
      }
      if (ga.birth_iteration != gb.birth_iteration) {
        return ga.birth_iteration > gb.birth_iteration;  // newer first
      }
      return ga.id < gb.id;
    });
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(top_n), members.size());
    for (std::size_t i = 0; i < take; ++i) {
      built[c].top.push_back(pool.entries[members[i]]);
    }
  }

  // order clusters by descending weight, stable on exact ties
  std::vector<std::size_t> cluster_order(k);
  for (std::size_t i = 0; i < k; ++i) cluster_order[i] = i;
  std::stable_sort(cluster_order.begin(), cluster_order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return built[a].weight > built[b].weight;
                   });

  RefinedGradients refined;
  refined.clusters.reserve(k);
  for (std::size_t c : cluster_order) {
    if (!built[c].top.empty()) {
      refined.clusters.push_back(std::move(built[c]));
    }
  }
  return refined;
}

}  // namespace pevo
