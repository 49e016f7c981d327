#pragma once

#include <string>
#include <utility>
#include <vector>

#include "promptevo/clustering.hpp"

namespace pevo {

struct ClusterReport {
  int cluster_id = 0;
  std::vector<std::string> member_ids;
  std::vector<double> centroid;
  double error_rate = 0.0;
  int quota = 0;
};

// Selected example ids for one cluster. The same id may appear in more than
// one role, but never twice inside the pair set.
struct TripartiteSample {
  std::vector<std::pair<std::string, std::string>> boundary_pairs;  // (correct, incorrect)
  std::vector<std::string> hard_negatives;
  std::vector<std::string> anchors;

  bool has_failures() const {
    return !hard_negatives.empty() || !boundary_pairs.empty();
  }
};

struct MemberView {
  std::string example_id;
  std::vector<double> embedding;
  bool correct = false;
};

// Fraction of incorrect members per cluster; an empty cluster reads 0.
std::vector<double> error_rates(const ClusterResult& clusters,
                                const std::vector<bool>& correctness);

// Per-cluster sampling budget: max(1, ceil(total * e_k / sum(e))). A zero
// error vector degrades to one sample everywhere. The ceil can overshoot the
// total; that is accepted rather than re-normalized.
std::vector<int> allocate_quotas(const std::vector<double>& rates,
                                 int total_quota);

// Greedy closest-pair matching across the positive/negative sets, ascending
// squared distance, endpoints used at most once, ties by smallest
// (positive index, negative index). Returns index pairs into the inputs.
std::vector<std::pair<int, int>> mine_boundary_pairs(
    const std::vector<std::vector<double>>& positives,
    const std::vector<std::vector<double>>& negatives, int max_pairs);

// Budget split: one hard negative if any failure exists, one anchor if any
// success exists, remaining budget to boundary pairs at two per pair. A
// cluster with no successes instead spends the whole quota on hard negatives,
// nearest to the centroid first.
TripartiteSample select_tripartite(const std::vector<MemberView>& members,
                                   const std::vector<double>& centroid,
                                   int quota);

}  // namespace pevo
