#pragma once

#include <utility>
#include <vector>

#include "promptevo/rng.hpp"

namespace pevo {

struct ClusterResult {
  std::vector<int> assignments;                 // one per input point
  std::vector<std::vector<double>> centroids;   // effective k entries
  double inertia = 0.0;                         // weighted SSE to assigned centroids
  int iterations_run = 0;
  std::vector<double> inertia_history;          // recorded after each Lloyd pass
};

// Lloyd's algorithm with kmeans++ seeding drawn from `rng`. k is clamped to
// the number of points. Converges when every centroid moves < 1e-6, capped at
// 100 passes. A cluster emptied during a pass is reseeded to the point
// farthest from its currently assigned centroid. Optional per-point weights
// (>= 0, not all zero) scale both the seeding distribution and the centroid
// means; ranking concerns stay outside this function.
ClusterResult kmeans(const std::vector<std::vector<double>>& points, int k,
                     const std::vector<double>* weights, Rng& rng);

inline ClusterResult kmeans(const std::vector<std::vector<double>>& points,
                            int k, Rng& rng) {
  return kmeans(points, k, nullptr, rng);
}

// Returns the member index whose vector is closest (squared L2) to the
// centroid; exact distance ties go to the smallest index.
int nearest_to_centroid(
    const std::vector<std::pair<int, std::vector<double>>>& members,
    const std::vector<double>& centroid);

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b);

}  // namespace pevo
