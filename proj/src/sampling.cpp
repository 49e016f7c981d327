#include "promptevo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pevo {

std::vector<double> error_rates(const ClusterResult& clusters,
                                const std::vector<bool>& correctness) {
  if (clusters.assignments.size() != correctness.size()) {
    throw std::invalid_argument("error_rates: correctness length mismatch");
  }
  std::vector<int> total(clusters.centroids.size(), 0);
  std::vector<int> wrong(clusters.centroids.size(), 0);
  for (std::size_t i = 0; i < clusters.assignments.size(); ++i) {
    const int c = clusters.assignments[i];
    if (c < 0 || c >= static_cast<int>(total.size())) {
      throw std::invalid_argument("error_rates: assignment out of range");
    }
    total[c] += 1;
    if (!correctness[i]) wrong[c] += 1;
  }
  std::vector<double> rates(total.size(), 0.0);
  for (std::size_t c = 0; c < total.size(); ++c) {
    if (total[c] > 0) {
      rates[c] = static_cast<double>(wrong[c]) / static_cast<double>(total[c]);
    }
  }
  return rates;
}

std::vector<int> allocate_quotas(const std::vector<double>& rates,
                                 int total_quota) {
  if (total_quota < 1) {
    throw std::invalid_argument("allocate_quotas: total quota must be positive");
  }
  double sum = 0.0;
  for (double e : rates) {
    if (e < 0.0) {
      throw std::invalid_argument("allocate_quotas: negative error rate");
    }
    sum += e;
  }
  std::vector<int> quotas(rates.size(), 1);
  if (sum <= 0.0) {
    return quotas;
  }
  for (std::size_t k = 0; k < rates.size(); ++k) {
    const double share = static_cast<double>(total_quota) * rates[k] / sum;
    quotas[k] = std::max(1, static_cast<int>(std::ceil(share)));
  }
  return quotas;
}

std::vector<std::pair<int, int>> mine_boundary_pairs(
    const std::vector<std::vector<double>>& positives,
    const std::vector<std::vector<double>>& negatives, int max_pairs) {
  std::vector<std::pair<int, int>> pairs;
  if (max_pairs <= 0 || positives.empty() || negatives.empty()) {
    return pairs;
  }
  std::vector<bool> pos_used(positives.size(), false);
  std::vector<bool> neg_used(negatives.size(), false);
  const int limit = std::min<int>(
      max_pairs,
      static_cast<int>(std::min(positives.size(), negatives.size())));

  // repeated min-selection over still-free endpoints; ties resolved by the
  // lexicographically smallest (positive, negative) index pair
  for (int taken = 0; taken < limit; ++taken) {
    int best_p = -1;
    int best_n = -1;
    double best_d = 0.0;
    for (std::size_t p = 0; p < positives.size(); ++p) {
      if (pos_used[p]) continue;
      for (std::size_t q = 0; q < negatives.size(); ++q) {
        if (neg_used[q]) continue;
        const double d = squared_distance(positives[p], negatives[q]);
        if (best_p < 0 || d < best_d) {
          best_d = d;
          best_p = static_cast<int>(p);
          best_n = static_cast<int>(q);
        }
      }
    }
    if (best_p < 0) break;
    pos_used[best_p] = true;
    neg_used[best_n] = true;
    pairs.emplace_back(best_p, best_n);
  }
  return pairs;
}

TripartiteSample select_tripartite(const std::vector<MemberView>& members,
                                   const std::vector<double>& centroid,
                                   int quota) {
  if (members.empty()) {
    throw std::invalid_argument("select_tripartite: empty cluster");
  }
  if (quota < 1) {
    throw std::invalid_argument("select_tripartite: quota must be positive");
  }

  std::vector<int> pos_idx;
  std::vector<int> neg_idx;
  for (std::size_t i = 0; i < members.size(); ++i) {
    (members[i].correct ? pos_idx : neg_idx).push_back(static_cast<int>(i));
  }

  TripartiteSample sample;

  if (pos_idx.empty()) {
    // failure-only cluster: the quota buys hard negatives, closest first
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(neg_idx.size());
    for (int i : neg_idx) {
      ranked.emplace_back(squared_distance(members[i].embedding, centroid), i);
    }
    std::sort(ranked.begin(), ranked.end());
    const int take = std::min<int>(quota, static_cast<int>(ranked.size()));
    for (int i = 0; i < take; ++i) {
      sample.hard_negatives.push_back(members[ranked[i].second].example_id);
    }
    return sample;
  }

  auto nearest_of = [&](const std::vector<int>& indices) {
    std::vector<std::pair<int, std::vector<double>>> view;
    view.reserve(indices.size());
    for (int i : indices) {
      view.emplace_back(i, members[i].embedding);
    }
    return nearest_to_centroid(view, centroid);
  };

  int budget = quota;
  if (!neg_idx.empty() && budget >= 1) {
    sample.hard_negatives.push_back(members[nearest_of(neg_idx)].example_id);
    budget -= 1;
  }
  if (budget >= 1) {
    sample.anchors.push_back(members[nearest_of(pos_idx)].example_id);
    budget -= 1;
  }
  if (!neg_idx.empty() && budget >= 2) {
    std::vector<std::vector<double>> pos_vecs;
    std::vector<std::vector<double>> neg_vecs;
    for (int i : pos_idx) pos_vecs.push_back(members[i].embedding);
    for (int i : neg_idx) neg_vecs.push_back(members[i].embedding);
    const auto pairs = mine_boundary_pairs(pos_vecs, neg_vecs, budget / 2);
    for (const auto& [p, q] : pairs) {
      sample.boundary_pairs.emplace_back(members[pos_idx[p]].example_id,
                                         members[neg_idx[q]].example_id);
    }
  }
  return sample;
}

}  // namespace pevo
