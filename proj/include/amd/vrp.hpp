#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace amd {

struct Node {
  double x = 0.0;
  double y = 0.0;
  int demand = 0;
};

/// A capacitated routing instance. nodes[0] is the depot (demand 0);
/// nodes[1..n] are customers with demand in (0, capacity].
struct VrpInstance {
  std::vector<Node> nodes;
  int capacity = 0;

  int customer_count() const { return static_cast<int>(nodes.size()) - 1; }
  int node_count() const { return static_cast<int>(nodes.size()); }
  const Node& depot() const { return nodes.front(); }
};

/// A visit sequence over node indices. The implied vehicle walk is
/// depot -> visits[0] -> ... -> visits.back() -> depot; index 0 inside
/// `visits` marks an intermediate depot return.
struct Solution {
  std::vector<int> visits;
  double length = 0.0;  // cached tour length, euclidean
};

double dist(const Node& a, const Node& b);

/// Random instance: coordinates i.i.d. uniform on the unit square, customer
/// demands i.i.d. uniform on {1..9}, depot demand 0. Pure in (n, capacity, seed).
/// Throws std::invalid_argument for n < 1 or capacity < 9.
VrpInstance generate_instance(int n, int capacity, std::uint64_t seed);

struct Violation {
  enum class Kind {
    BadIndex,           // index outside [0, n]
    ConsecutiveDepot,   // two depot visits in a row (start/end count as depot)
    DuplicateCustomer,  // customer appears more than once
    MissingCustomer,    // customer never visited
    CapacityExceeded,   // a route's demand exceeds capacity
  };
  Kind kind = Kind::BadIndex;
  int index = 0;  // offending node index, or route ordinal for capacity
  std::string message;
};

/// Checks the three solution invariants (visit-once, no consecutive depot
/// visits on the implied walk, per-route demand <= capacity) and reports the
/// first failure in a left-to-right scan. nullopt means valid.
std::optional<Violation> validate_solution(const VrpInstance& inst, const Solution& sol);

/// Length of the closed walk depot -> visits -> depot.
/// Throws std::invalid_argument naming the first violated constraint.
double tour_length(const VrpInstance& inst, const Solution& sol);

/// Maximal depot-free segments of the visit sequence. Joining the routes with
/// single depot separators reproduces `visits` exactly. Validates first.
std::vector<std::vector<int>> split_routes(const VrpInstance& inst, const Solution& sol);

/// Inverse of split_routes.
std::vector<int> join_routes(const std::vector<std::vector<int>>& routes);

// --- text formats -----------------------------------------------------------
// Instance: line 1 "vrp <n> <capacity>", then n+1 lines "<index> <x> <y> <demand>"
// with the depot (index 0) first. Doubles printed with 17 significant digits,
// so write/parse round-trips are exact.
// Solution: one line of space-separated node indices.

std::string format_instance(const VrpInstance& inst);
VrpInstance parse_instance(const std::string& text);
void write_instance(const std::string& path, const VrpInstance& inst);
VrpInstance read_instance(const std::string& path);

std::string format_solution(const Solution& sol);
Solution parse_solution(const std::string& text);
void write_solution(const std::string& path, const Solution& sol);
Solution read_solution(const std::string& path);

}  // namespace amd
