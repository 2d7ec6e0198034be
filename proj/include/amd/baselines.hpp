#pragma once

#include "amd/vrp.hpp"

namespace amd {

/// Provably optimal solution for tiny instances (n <= 8): enumerates customer
/// permutations and, per permutation, partitions it into capacity-feasible
/// routes by a shortest-path DP over split points. Deterministic; among
/// equal-length optima the first in permutation-lexicographic order wins.
Solution brute_force_optimal(const VrpInstance& inst);

/// Greedy construction: from the current position visit the nearest feasible
/// customer (unvisited, demand <= remaining); return to the depot when none
/// fits. Ties break toward the lower index.
Solution nearest_neighbor(const VrpInstance& inst);

/// Intra-route 2-OPT, best-improvement pivoting: repeatedly applies the most
/// improving segment reversal inside each route until no reversal improves by
/// more than 1e-10. Route customer sets (hence loads) are unchanged.
Solution two_opt(const VrpInstance& inst, const Solution& sol);

}  // namespace amd
