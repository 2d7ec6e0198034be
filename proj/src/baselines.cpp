#include "amd/baselines.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace amd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoOptThreshold = 1e-10;

double node_dist(const VrpInstance& inst, int a, int b) {
  return dist(inst.nodes[static_cast<std::size_t>(a)], inst.nodes[static_cast<std::size_t>(b)]);
}

}  // namespace

Solution brute_force_optimal(const VrpInstance& inst) {
  const int n = inst.customer_count();
  if (n > 8) throw std::invalid_argument("brute_force_optimal: n > 8 is intractable");
  if (n == 0) return Solution{};

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 1);

  double best_len = kInf;
  std::vector<int> best_visits;

  // seg_cost(i, j): depot -> perm[i] -> ... -> perm[j] -> depot
  std::vector<double> best(static_cast<std::size_t>(n) + 1);
  std::vector<int> split_from(static_cast<std::size_t>(n) + 1);
  do {
    best[0] = 0.0;
    for (int j = 1; j <= n; ++j) {
      best[static_cast<std::size_t>(j)] = kInf;
      int demand = 0;
      double inner = 0.0;
      // extend the last route backwards from customer j-1 to start i
      for (int i = j - 1; i >= 0; --i) {
        demand += inst.nodes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])].demand;
        if (demand > inst.capacity) break;
        if (i < j - 1)
          inner += node_dist(inst, perm[static_cast<std::size_t>(i)],
                             perm[static_cast<std::size_t>(i + 1)]);
        const double route = node_dist(inst, 0, perm[static_cast<std::size_t>(i)]) + inner +
                             node_dist(inst, perm[static_cast<std::size_t>(j - 1)], 0);
        const double cand = best[static_cast<std::size_t>(i)] + route;
        if (cand < best[static_cast<std::size_t>(j)]) {
          best[static_cast<std::size_t>(j)] = cand;
          split_from[static_cast<std::size_t>(j)] = i;
        }
      }
    }
    if (best[static_cast<std::size_t>(n)] < best_len) {
      best_len = best[static_cast<std::size_t>(n)];
      // reconstruct split points into a visit sequence
      std::vector<std::pair<int, int>> segments;
      for (int j = n; j > 0; j = split_from[static_cast<std::size_t>(j)])
        segments.emplace_back(split_from[static_cast<std::size_t>(j)], j);
      std::reverse(segments.begin(), segments.end());
      best_visits.clear();
      for (std::size_t s = 0; s < segments.size(); ++s) {
        if (s > 0) best_visits.push_back(0);
        for (int k = segments[s].first; k < segments[s].second; ++k)
          best_visits.push_back(perm[static_cast<std::size_t>(k)]);
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Solution sol;
  sol.visits = std::move(best_visits);
  sol.length = tour_length(inst, sol);
  return sol;
}

Solution nearest_neighbor(const VrpInstance& inst) {
  const int n = inst.customer_count();
  Solution sol;
  std::vector<char> visited(static_cast<std::size_t>(n) + 1, 0);
  int position = 0;
  int remaining = inst.capacity;
  int served = 0;
  while (served < n) {
    int pick = -1;
    double pick_dist = kInf;
    for (int j = 1; j <= n; ++j) {
      if (visited[static_cast<std::size_t>(j)]) continue;
      if (inst.nodes[static_cast<std::size_t>(j)].demand > remaining) continue;
      const double d = node_dist(inst, position, j);
      if (d < pick_dist) {  // strict: ties keep the lower index
        pick_dist = d;
        pick = j;
      }
    }
    if (pick < 0) {
      sol.visits.push_back(0);
      position = 0;
      remaining = inst.capacity;
      continue;
    }
    sol.visits.push_back(pick);
    visited[static_cast<std::size_t>(pick)] = 1;
    remaining -= inst.nodes[static_cast<std::size_t>(pick)].demand;
    position = pick;
    ++served;
  }
  sol.length = tour_length(inst, sol);
  return sol;
}

Solution two_opt(const VrpInstance& inst, const Solution& sol) {
  std::vector<std::vector<int>> routes = split_routes(inst, sol);
  for (auto& route : routes) {
    const int k = static_cast<int>(route.size());
    if (k < 2) continue;
    bool improved = true;
    while (improved) {
      improved = false;
      double best_delta = -kTwoOptThreshold;
      int best_i = -1, best_j = -1;
      for (int i = 0; i < k - 1; ++i) {
        const int before = (i == 0) ? 0 : route[static_cast<std::size_t>(i - 1)];
        for (int j = i + 1; j < k; ++j) {
          const int after = (j == k - 1) ? 0 : route[static_cast<std::size_t>(j + 1)];
          const int ri = route[static_cast<std::size_t>(i)];
          const int rj = route[static_cast<std::size_t>(j)];
          const double delta = node_dist(inst, before, rj) + node_dist(inst, ri, after) -
                               node_dist(inst, before, ri) - node_dist(inst, rj, after);
          if (delta < best_delta) {
            best_delta = delta;
            best_i = i;
            best_j = j;
          }
        }
      }
      if (best_i >= 0) {
        std::reverse(route.begin() + best_i, route.begin() + best_j + 1);
        improved = true;
      }
    }
  }
  Solution out;
  out.visits = join_routes(routes);
  out.length = tour_length(inst, out);
  return out;
}

}  // namespace amd
