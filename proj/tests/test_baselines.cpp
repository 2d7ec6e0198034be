#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "amd/baselines.hpp"
#include "amd/rng.hpp"

using namespace amd;

namespace {

/// Independent (much slower) oracle: DFS over the decode state machine
/// enumerating every valid visit sequence, returning the minimum length.
void enumerate_all(const VrpInstance& inst, std::vector<int>& visits, std::vector<char>& visited,
                   int served, int last, int remaining, double& best) {
  const int n = inst.customer_count();
  if (served == n) {
    Solution sol;
    sol.visits = visits;
    best = std::min(best, tour_length(inst, sol));
    return;
  }
  if (last != 0) {
    visits.push_back(0);
    enumerate_all(inst, visits, visited, served, 0, inst.capacity, best);
    visits.pop_back();
  }
  for (int c = 1; c <= n; ++c) {
    if (visited[static_cast<std::size_t>(c)]) continue;
    const int demand = inst.nodes[static_cast<std::size_t>(c)].demand;
    if (demand > remaining) continue;
    visited[static_cast<std::size_t>(c)] = 1;
    visits.push_back(c);
    enumerate_all(inst, visits, visited, served + 1, c, remaining - demand, best);
    visits.pop_back();
    visited[static_cast<std::size_t>(c)] = 0;
  }
}

double exhaustive_optimum(const VrpInstance& inst) {
  std::vector<int> visits;
  std::vector<char> visited(static_cast<std::size_t>(inst.customer_count()) + 1, 0);
  double best = std::numeric_limits<double>::infinity();
  enumerate_all(inst, visits, visited, 0, 0, inst.capacity, best);
  return best;
}

VrpInstance square_instance() {
  VrpInstance inst;
  inst.capacity = 30;
  inst.nodes = {{0, 0, 0}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  return inst;
}

}  // namespace

TEST_CASE("brute force: unit square has a single perimeter route") {
  const VrpInstance inst = square_instance();
  const Solution sol = brute_force_optimal(inst);
  CHECK(sol.length == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(split_routes(inst, sol).size() == 1);
}

TEST_CASE("brute force: capacity forces single-customer routes") {
  VrpInstance inst;
  inst.capacity = 9;
  inst.nodes = {{0, 0, 0}, {0.8, 0.1, 9}, {0.2, 0.7, 9}};
  const Solution sol = brute_force_optimal(inst);
  const double expect = 2.0 * dist(inst.nodes[0], inst.nodes[1]) +
                        2.0 * dist(inst.nodes[0], inst.nodes[2]);
  CHECK(sol.length == doctest::Approx(expect).epsilon(1e-12));
  CHECK(split_routes(inst, sol).size() == 2);
}

TEST_CASE("brute force matches exhaustive enumeration on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const VrpInstance inst = generate_instance(5, rng.next_int(9, 20), rng.next_u64());
    const Solution sol = brute_force_optimal(inst);
    CHECK(!validate_solution(inst, sol));
    CHECK(sol.length == doctest::Approx(exhaustive_optimum(inst)).epsilon(1e-9));
  }
}

TEST_CASE("brute force rejects large instances") {
  const VrpInstance inst = generate_instance(9, 30, 1);
  CHECK_THROWS_AS(static_cast<void>(brute_force_optimal(inst)), std::invalid_argument);
}

TEST_CASE("nearest neighbor: single customer") {
  const VrpInstance inst = generate_instance(1, 10, 3);
  const Solution sol = nearest_neighbor(inst);
  CHECK(sol.visits == std::vector<int>{1});
}

TEST_CASE("nearest neighbor walks collinear customers in order") {
  VrpInstance inst;
  inst.capacity = 30;
  inst.nodes = {{0, 0, 0}, {0.1, 0, 1}, {0.2, 0, 1}, {0.3, 0, 1}};
  const Solution sol = nearest_neighbor(inst);
  CHECK(sol.visits == std::vector<int>{1, 2, 3});
}

TEST_CASE("nearest neighbor output is always valid") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const VrpInstance inst =
        generate_instance(rng.next_int(1, 20), rng.next_int(9, 40), rng.next_u64());
    const Solution sol = nearest_neighbor(inst);
    CHECK(!validate_solution(inst, sol));
  }
}

TEST_CASE("two_opt uncrosses the textbook route") {
  VrpInstance inst;
  inst.capacity = 30;
  inst.nodes = {{0, 0, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  Solution crossed;
  crossed.visits = {1, 2, 3};  // 0 -> (1,0) -> (0,1) -> (1,1) -> 0, length 2 + 2*sqrt(2)
  crossed.length = tour_length(inst, crossed);
  CHECK(crossed.length == doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-12));

  const Solution improved = two_opt(inst, crossed);
  CHECK(improved.length == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(improved.visits == std::vector<int>{1, 3, 2});
}

TEST_CASE("two_opt leaves an optimal route unchanged") {
  const VrpInstance inst = square_instance();
  Solution optimal;
  optimal.visits = {1, 2, 3};
  optimal.length = tour_length(inst, optimal);
  const Solution out = two_opt(inst, optimal);
  CHECK(out.visits == optimal.visits);
  CHECK(out.length == doctest::Approx(optimal.length).epsilon(1e-12));
}

TEST_CASE("two_opt never lengthens and reaches a 2-OPT-local solution") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const VrpInstance inst =
        generate_instance(rng.next_int(2, 15), rng.next_int(9, 30), rng.next_u64());
    const Solution start = nearest_neighbor(inst);
    const Solution out = two_opt(inst, start);
    CHECK(!validate_solution(inst, out));
    CHECK(out.length <= start.length + 1e-12);

    // customer sets per route are unchanged (intra-route moves only)
    auto sets_of = [](std::vector<std::vector<int>> routes) {
      for (auto& r : routes) std::sort(r.begin(), r.end());
      return routes;
    };
    CHECK(sets_of(split_routes(inst, out)) == sets_of(split_routes(inst, start)));

    // no single reversal still improves
    const auto routes = split_routes(inst, out);
    for (const auto& route : routes) {
      const int k = static_cast<int>(route.size());
      for (int i = 0; i < k - 1; ++i)
        for (int j = i + 1; j < k; ++j) {
          const int before = (i == 0) ? 0 : route[static_cast<std::size_t>(i - 1)];
          const int after = (j == k - 1) ? 0 : route[static_cast<std::size_t>(j + 1)];
          const auto& nodes = inst.nodes;
          const double delta =
              dist(nodes[static_cast<std::size_t>(before)], nodes[static_cast<std::size_t>(route[static_cast<std::size_t>(j)])]) +
              dist(nodes[static_cast<std::size_t>(route[static_cast<std::size_t>(i)])], nodes[static_cast<std::size_t>(after)]) -
              dist(nodes[static_cast<std::size_t>(before)], nodes[static_cast<std::size_t>(route[static_cast<std::size_t>(i)])]) -
              dist(nodes[static_cast<std::size_t>(route[static_cast<std::size_t>(j)])], nodes[static_cast<std::size_t>(after)]);
          CHECK(delta >= -1e-10);
        }
    }
  }
}

TEST_CASE("oracle ordering: optimal <= two_opt(nn) <= nn") {
  Rng rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const VrpInstance inst = generate_instance(6, 18, rng.next_u64());
    const Solution opt = brute_force_optimal(inst);
    const Solution nn = nearest_neighbor(inst);
    const Solution improved = two_opt(inst, nn);
    CHECK(opt.length <= improved.length + 1e-9);
    CHECK(improved.length <= nn.length + 1e-12);
  }
}
