#include "promptevo/clustering.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace pevo {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

constexpr double kConvergenceTolSq = 1e-6 * 1e-6;
constexpr int kMaxLloydIterations = 100;

// Cumulative-sum draw; scale-invariant in the weights because the threshold
// u * total scales with them.
std::size_t weighted_choice(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) {
    return weights.size();  // sentinel: no mass left
  }
  const double u = rng.next_unit() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum) return i;
  }
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return i - 1;
  }
  return weights.size();
}

std::vector<std::vector<double>> kmeanspp_init(
    const std::vector<std::vector<double>>& points,
    const std::vector<double>& w, int k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centers;
  centers.reserve(static_cast<std::size_t>(k));
  std::vector<bool> chosen(n, false);

  std::size_t first = weighted_choice(w, rng);
  if (first >= n) first = 0;
  centers.push_back(points[first]);
  chosen[first] = true;

  std::vector<double> d2(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(points[i], centers.front());
  }

  while (static_cast<int>(centers.size()) < k) {
    std::vector<double> mass(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      mass[i] = chosen[i] ? 0.0 : w[i] * d2[i];
    }
    std::size_t pick = weighted_choice(mass, rng);
    if (pick >= n) {
      // remaining points coincide with chosen centers; take the first free one
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
      if (pick >= n) break;
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
    }
  }
  return centers;
}

}  // namespace

ClusterResult kmeans(const std::vector<std::vector<double>>& points, int k,
                     const std::vector<double>* weights, Rng& rng) {
  if (points.empty()) {
    throw std::invalid_argument("kmeans: empty point set");
  }
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  if (dim == 0) {
    throw std::invalid_argument("kmeans: zero-dimension points");
  }
  for (const auto& p : points) {
    if (p.size() != dim) {
      throw std::invalid_argument("kmeans: inconsistent point dimensions");
    }
  }
  if (k < 1) {
    throw std::invalid_argument("kmeans: k must be positive");
  }

  std::vector<double> w(n, 1.0);
  if (weights != nullptr) {
    if (weights->size() != n) {
      throw std::invalid_argument("kmeans: weights length mismatch");
    }
    double total = 0.0;
    for (double x : *weights) {
      if (x < 0.0) throw std::invalid_argument("kmeans: negative weight");
      total += x;
    }
    if (total <= 0.0) throw std::invalid_argument("kmeans: all-zero weights");
    w = *weights;
  }

  const int kk = std::min<int>(k, static_cast<int>(n));
  ClusterResult result;
  result.centroids = kmeanspp_init(points, w, kk, rng);
  const std::size_t effective_k = result.centroids.size();
  result.assignments.assign(n, 0);
  auto& assign = result.assignments;

  for (int pass = 0; pass < kMaxLloydIterations; ++pass) {
    // assignment: nearest centroid, distance ties to the smaller index
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], result.centroids[0]);
      for (std::size_t c = 1; c < effective_k; ++c) {
        const double d = squared_distance(points[i], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      assign[i] = best;
    }

    std::vector<double> mass(effective_k, 0.0);
    std::vector<int> count(effective_k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      mass[assign[i]] += w[i];
      count[assign[i]] += 1;
    }

    // reseed each emptied cluster to the point farthest from its assigned
    // centroid (first such point on exact ties), never draining a singleton
    bool reseeded = false;
    for (std::size_t c = 0; c < effective_k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[assign[i]] <= 1) continue;
        const double d = squared_distance(points[i], result.centroids[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far >= n) continue;  // nothing stealable; cluster stays empty
      reseeded = true;
      const int old = assign[far];
      count[old] -= 1;
      mass[old] -= w[far];
      assign[far] = static_cast<int>(c);
      count[c] = 1;
      mass[c] = w[far];
    }

    // update: weighted mean of members; weightless-but-populated clusters
    // keep their previous centroid
    std::vector<std::vector<double>> next(effective_k,
                                          std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const int c = assign[i];
      for (std::size_t j = 0; j < dim; ++j) {
        next[c][j] += w[i] * points[i][j];
      }
    }
    for (std::size_t c = 0; c < effective_k; ++c) {
      if (mass[c] > 0.0) {
        for (std::size_t j = 0; j < dim; ++j) next[c][j] /= mass[c];
      } else {
        next[c] = result.centroids[c];
      }
    }

    double movement = 0.0;
    for (std::size_t c = 0; c < effective_k; ++c) {
      movement =
          std::max(movement, squared_distance(result.centroids[c], next[c]));
    }
    result.centroids = std::move(next);
    result.iterations_run = pass + 1;

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia +=
          w[i] * squared_distance(points[i], result.centroids[assign[i]]);
    }
    result.inertia_history.push_back(inertia);
    result.inertia = inertia;

    if (!reseeded && movement < kConvergenceTolSq) {
      break;
    }
  }
  return result;
}

int nearest_to_centroid(
    const std::vector<std::pair<int, std::vector<double>>>& members,
    const std::vector<double>& centroid) {
  if (members.empty()) {
    throw std::invalid_argument("nearest_to_centroid: empty member list");
  }
  int best_index = members.front().first;
  double best_d = squared_distance(members.front().second, centroid);
  for (std::size_t i = 1; i < members.size(); ++i) {
    const double d = squared_distance(members[i].second, centroid);
    const int idx = members[i].first;
    if (d < best_d || (d == best_d && idx < best_index)) {
      best_d = d;
      best_index = idx;
    }
  }
  return best_index;
}

}  // namespace pevo
