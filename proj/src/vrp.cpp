#include "amd/vrp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "amd/rng.hpp"

namespace amd {

double dist(const Node& a, const Node& b) { return std::hypot(a.x - b.x, a.y - b.y); }

VrpInstance generate_instance(int n, int capacity, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_instance: n must be >= 1");
  if (capacity < 9)
    throw std::invalid_argument("generate_instance: capacity must be >= 9 (max customer demand)");
  Rng rng = make_stream(seed, Stream::InstanceGen);
  VrpInstance inst;
  inst.capacity = capacity;
  inst.nodes.resize(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    Node& node = inst.nodes[static_cast<std::size_t>(i)];
    node.x = rng.next_unit();
    node.y = rng.next_unit();
    node.demand = (i == 0) ? 0 : rng.next_int(1, 9);
  }
  return inst;
}

std::optional<Violation> validate_solution(const VrpInstance& inst, const Solution& sol) {
  const int n = inst.customer_count();
  std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
  int prev = 0;  // walk starts at the depot
  int route_demand = 0;
  int route_index = 0;
  for (std::size_t pos = 0; pos < sol.visits.size(); ++pos) {
    const int v = sol.visits[pos];
    if (v < 0 || v > n) {
      return Violation{Violation::Kind::BadIndex, v,
                       "node index " + std::to_string(v) + " out of range at position " +
                           std::to_string(pos)};
    }
    if (v == 0) {
      if (prev == 0) {
        return Violation{Violation::Kind::ConsecutiveDepot, static_cast<int>(pos),
                         "consecutive depot visit at position " + std::to_string(pos)};
      }
      route_demand = 0;
      ++route_index;
    } else {
      if (seen[static_cast<std::size_t>(v)]) {
        return Violation{Violation::Kind::DuplicateCustomer, v,
                         "customer " + std::to_string(v) + " visited more than once"};
      }
      seen[static_cast<std::size_t>(v)] = 1;
      route_demand += inst.nodes[static_cast<std::size_t>(v)].demand;
      if (route_demand > inst.capacity) {
        return Violation{Violation::Kind::CapacityExceeded, route_index,
                         "route " + std::to_string(route_index) + " demand " +
                             std::to_string(route_demand) + " exceeds capacity " +
                             std::to_string(inst.capacity)};
      }
    }
    prev = v;
  }
  if (prev == 0 && !sol.visits.empty()) {
    return Violation{Violation::Kind::ConsecutiveDepot, static_cast<int>(sol.visits.size()) - 1,
                     "trailing depot visit (walk already ends at the depot)"};
  }
  for (int c = 1; c <= n; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      return Violation{Violation::Kind::MissingCustomer, c,
                       "customer " + std::to_string(c) + " never visited"};
    }
  }
  return std::nullopt;
}

double tour_length(const VrpInstance& inst, const Solution& sol) {
  if (auto v = validate_solution(inst, sol)) throw std::invalid_argument(v->message);
  double total = 0.0;
  const Node* prev = &inst.nodes[0];
  for (int v : sol.visits) {
    const Node* cur = &inst.nodes[static_cast<std::size_t>(v)];
    total += dist(*prev, *cur);
    prev = cur;
  }
  total += dist(*prev, inst.nodes[0]);
  return total;
}

std::vector<std::vector<int>> split_routes(const VrpInstance& inst, const Solution& sol) {
  if (auto v = validate_solution(inst, sol)) throw std::invalid_argument(v->message);
  std::vector<std::vector<int>> routes;
  std::vector<int> current;
  for (int v : sol.visits) {
    if (v == 0) {
      routes.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(v);
    }
  }
  if (!current.empty()) routes.push_back(std::move(current));
  return routes;
}

std::vector<int> join_routes(const std::vector<std::vector<int>>& routes) {
  std::vector<int> visits;
  for (std::size_t r = 0; r < routes.size(); ++r) {
    if (r > 0) visits.push_back(0);
    visits.insert(visits.end(), routes[r].begin(), routes[r].end());
  }
  return visits;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw std::runtime_error("instance parse error at line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_instance(const VrpInstance& inst) {
  std::ostringstream out;
  out << "vrp " << inst.customer_count() << ' ' << inst.capacity << '\n';
  for (int i = 0; i < inst.node_count(); ++i) {
    const Node& n = inst.nodes[static_cast<std::size_t>(i)];
    out << i << ' ' << format_double(n.x) << ' ' << format_double(n.y) << ' ' << n.demand << '\n';
  }
  return out.str();
}

VrpInstance parse_instance(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) parse_fail(1, "empty input");
  ++lineno;
  std::istringstream header(line);
  std::string tag;
  int n = 0, capacity = 0;
  if (!(header >> tag >> n >> capacity) || tag != "vrp")
    parse_fail(lineno, "expected header 'vrp <n> <capacity>'");
  if (n < 0) parse_fail(lineno, "negative customer count");
  if (capacity <= 0) parse_fail(lineno, "capacity must be positive");
  VrpInstance inst;
  inst.capacity = capacity;
  inst.nodes.resize(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    if (!std::getline(in, line)) parse_fail(lineno + 1, "unexpected end of input");
    ++lineno;
    std::istringstream row(line);
    int index = -1, demand = -1;
    double x = 0.0, y = 0.0;
    if (!(row >> index >> x >> y >> demand)) parse_fail(lineno, "expected '<index> <x> <y> <demand>'");
    if (index != i) parse_fail(lineno, "node index " + std::to_string(index) + " out of order");
    if (!std::isfinite(x) || !std::isfinite(y)) parse_fail(lineno, "non-finite coordinate");
    if (i == 0 && demand != 0) parse_fail(lineno, "depot demand must be 0");
    if (i > 0 && (demand <= 0 || demand > capacity))
      parse_fail(lineno, "customer demand must be in (0, capacity]");
    inst.nodes[static_cast<std::size_t>(i)] = Node{x, y, demand};
  }
  return inst;
}

void write_instance(const std::string& path, const VrpInstance& inst) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << format_instance(inst);
  if (!out) throw std::runtime_error("write failed: " + path);
}

VrpInstance read_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_instance(buf.str());
}

std::string format_solution(const Solution& sol) {
  std::ostringstream out;
  for (std::size_t i = 0; i < sol.visits.size(); ++i) {
    if (i > 0) out << ' ';
    out << sol.visits[i];
  }
  out << '\n';
  return out.str();
}

Solution parse_solution(const std::string& text) {
  Solution sol;
  std::istringstream in(text);
  int v = 0;
  while (in >> v) sol.visits.push_back(v);
  return sol;
}

void write_solution(const std::string& path, const Solution& sol) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << format_solution(sol);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Solution read_solution(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open solution file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_solution(buf.str());
}

}  // namespace amd
