// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 6 trains two desk-scale policies and runs last; pass
// --only K to run a single criterion while iterating.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "amd/autodiff.hpp"
#include "amd/baselines.hpp"
#include "amd/checkpoint.hpp"
#include "amd/parallel.hpp"
#include "amd/rng.hpp"
#include "amd/rollout.hpp"
#include "amd/trainer.hpp"
#include "amd/vrp.hpp"

using namespace amd;

namespace {

std::string g_cli;  // path to the amdvrp binary (criterion 8)

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Check {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fresh_dir(const std::string& name) {
  const std::string dir =
      std::filesystem::temp_directory_path().string() + "/amd_acceptance/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing:" + path + ">";
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  CliResult result;
  if (!pipe) return result;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof(buf), pipe)) result.out.append(buf, got);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

ModelConfig config(int dim, int layers, int heads) {
  ModelConfig cfg;
  cfg.dim = dim;
  cfg.layers = layers;
  cfg.heads = heads;
  return cfg;
}

// --- criterion 1: gradient correctness --------------------------------------

Outcome criterion_gradients() {
  const ModelConfig cfg = config(16, 2, 2);
  const std::uint64_t seed = 61;
  const VrpInstance inst = generate_instance(6, 10, seed);  // several routes
  const ModelParams params = ModelParams::init(cfg, seed);
  RolloutOptions opts;
  opts.mode = SelectMode::Sample;
  opts.reencode = ReencodePolicy::OnDepotReturn;
  opts.seed = derive_seed(seed, Stream::Sampling);
  const RolloutResult rollout = construct(inst, params, opts);
  if (rollout.reencode_count < 1) return {false, "fixture failed to trigger a re-encode"};

  FiniteDiffOptions fd;
  fd.coordinates = 150;
  fd.step = 1e-5;
  fd.tolerance = 1e-4;
  fd.seed = seed;
  const FiniteDiffReport report =
      finite_diff_check(inst, params, rollout.solution, ReencodePolicy::OnDepotReturn, fd);
  std::ostringstream detail;
  detail << "max_rel_err=" << report.max_rel_err << " over " << report.coordinates
         << " coords, reencodes=" << rollout.reencode_count;
  if (!report.pass) detail << " worst=" << report.worst_path;
  return {report.pass, detail.str()};
}

// --- criterion 2: feasibility suite ------------------------------------------

Outcome criterion_feasibility() {
  const ModelParams params = ModelParams::init(config(32, 2, 4), 62);
  long violations = 0;
  long rollouts = 0;
  long prob_checks = 0;
  Rng rng(63);
  const StepProbe probe = [&](const DecodeState&, const std::vector<char>& mask, const Vec& probs,
                              int chosen) {
    double total = 0.0;
    for (int j = 0; j < probs.size(); ++j) {
      if (mask[static_cast<std::size_t>(j)]) {
        total += probs[j];
      } else if (probs[j] != 0.0) {
        ++violations;  // masked node with nonzero probability
      }
    }
    if (std::abs(total - 1.0) > 1e-9) ++violations;
    if (!mask[static_cast<std::size_t>(chosen)]) ++violations;
    ++prob_checks;
  };

  const int sizes[3] = {5, 10, 20};
  for (int i = 0; i < 1000; ++i) {
    const int n = sizes[i % 3];
    const VrpInstance inst = generate_instance(n, 30, rng.next_u64());
    for (auto mode : {SelectMode::Greedy, SelectMode::Sample})
      for (auto re : {ReencodePolicy::Never, ReencodePolicy::OnDepotReturn}) {
        RolloutOptions opts;
        opts.mode = mode;
        opts.reencode = re;
        opts.seed = rng.next_u64();
        opts.probe = &probe;
        const RolloutResult r = construct(inst, params, opts);
        if (validate_solution(inst, r.solution)) ++violations;
        ++rollouts;
      }
  }
  std::ostringstream detail;
  detail << rollouts << " rollouts, " << prob_checks << " probability vectors, " << violations
         << " violations";
  return {violations == 0 && rollouts == 4000, detail.str()};
}

// --- criterion 3: subinstance equivalence ------------------------------------

Outcome criterion_subinstance() {
  const ModelConfig cfg = config(32, 3, 4);
  Rng rng(64);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.next_int(2, 8);
    const VrpInstance inst = generate_instance(n, 18, rng.next_u64());
    const ModelParams params = ModelParams::init(cfg, rng.next_u64());
    std::vector<char> visited(static_cast<std::size_t>(n) + 1, 0);
    int masked = 0;
    for (int c = 1; c <= n; ++c)
      if (rng.next_unit() < 0.45 && masked < n - 1) {
        visited[static_cast<std::size_t>(c)] = 1;
        ++masked;
      }

    VrpInstance reduced;
    reduced.capacity = inst.capacity;
    reduced.nodes.push_back(inst.nodes[0]);
    for (int c = 1; c <= n; ++c)
      if (!visited[static_cast<std::size_t>(c)])
        reduced.nodes.push_back(inst.nodes[static_cast<std::size_t>(c)]);

    const EmbeddingSet full = encode(inst, visited, params);
    const EmbeddingSet sub = encode(reduced, no_visited(reduced), params);
    int col = 0;
    for (int i = 0; i <= n; ++i) {
      if (i > 0 && visited[static_cast<std::size_t>(i)]) continue;
      for (int r = 0; r < cfg.dim; ++r)
        worst = std::max(worst, std::abs(full.h(r, i) - sub.h(r, col)));
      ++col;
    }
  }
  std::ostringstream detail;
  detail << "100 pairs, max |diff|=" << worst;
  return {worst <= 1e-12, detail.str()};
}

// --- criterion 4: static reduction -------------------------------------------

Outcome criterion_static_reduction() {
  Rng rng(65);
  int single_pass_fail = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const VrpInstance inst = generate_instance(10, 15, rng.next_u64());
    const ModelParams params = ModelParams::init(config(16, 2, 2), rng.next_u64());
    for (auto mode : {SelectMode::Greedy, SelectMode::Sample}) {
      RolloutOptions opts;
      opts.mode = mode;
      opts.reencode = ReencodePolicy::Never;
      opts.seed = rng.next_u64();
      const RolloutResult r = construct(inst, params, opts);
      if (r.encode_passes != 1 || r.reencode_count != 0) ++single_pass_fail;
    }
  }

  // total demand <= capacity: when no depot return happens, both policies are
  // one and the same computation
  int premise = 0, identical = 0, trials = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const VrpInstance inst = generate_instance(5, 45, rng.next_u64());
    const ModelParams params = ModelParams::init(config(16, 2, 2), rng.next_u64());
    for (auto mode : {SelectMode::Greedy, SelectMode::Sample}) {
      ++trials;
      RolloutOptions opts;
      opts.mode = mode;
      opts.seed = rng.next_u64();
      opts.reencode = ReencodePolicy::Never;
      const RolloutResult fixed = construct(inst, params, opts);
      bool has_depot = false;
      for (int v : fixed.solution.visits) has_depot |= (v == 0);
      if (has_depot) continue;  // premise: single route
      ++premise;
      opts.reencode = ReencodePolicy::OnDepotReturn;
      const RolloutResult fresh = construct(inst, params, opts);
      if (fixed.solution.visits == fresh.solution.visits && fixed.logprob == fresh.logprob &&
          fixed.solution.length == fresh.solution.length)
        ++identical;
    }
  }
  std::ostringstream detail;
  detail << "never-mode single-pass failures=" << single_pass_fail << "; single-route pairs "
         << identical << "/" << premise << " bitwise identical (of " << trials << " rollouts)";
  return {single_pass_fail == 0 && premise >= trials / 4 && identical == premise, detail.str()};
}

// --- criterion 5: oracle ordering ---------------------------------------------

Outcome criterion_oracles() {
  Rng rng(66);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const VrpInstance inst = generate_instance(7, 20, rng.next_u64());
    const Solution opt = brute_force_optimal(inst);
    const Solution nn = nearest_neighbor(inst);
    const Solution improved = two_opt(inst, nn);
    if (!(opt.length <= improved.length + 1e-9)) ++failures;
    if (!(improved.length <= nn.length + 1e-12)) ++failures;
  }
  std::ostringstream detail;
  detail << "100 instances, failures=" << failures;
  return {failures == 0, detail.str()};
}

// --- criterion 7: chain-rule fidelity ------------------------------------------

void enumerate_trajectories(const VrpInstance& inst, const DecodeState& st,
                            std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
  if (st.visited_count == inst.customer_count()) {
    out.push_back(prefix);
    return;
  }
  const auto mask = feasibility_mask(inst, st);
  for (int j = 0; j < inst.node_count(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    prefix.push_back(j);
    enumerate_trajectories(inst, apply_move(inst, st, j), prefix, out);
    prefix.pop_back();
  }
}

Outcome criterion_chain_rule() {
  VrpInstance inst;
  inst.capacity = 12;
  inst.nodes = {{0.5, 0.5, 0}, {0.2, 0.3, 4}, {0.8, 0.1, 5}, {0.5, 0.9, 6}};
  const ModelParams params = ModelParams::init(config(16, 2, 2), 67);

  std::vector<std::vector<int>> all;
  std::vector<int> prefix;
  enumerate_trajectories(inst, initial_state(inst), prefix, all);

  std::map<std::vector<int>, double> expected;
  double total_p = 0.0;
  for (const auto& visits : all) {
    Solution sol;
    sol.visits = visits;
    const double p = std::exp(logprob_of(inst, params, sol, ReencodePolicy::OnDepotReturn));
    expected[visits] = p;
    total_p += p;
  }
  if (std::abs(total_p - 1.0) > 1e-9)
    return {false, "enumerated probabilities sum to " + std::to_string(total_p)};

  const int samples = 20000;
  std::map<std::vector<int>, int> counts;
  for (int s = 0; s < samples; ++s) {
    RolloutOptions opts;
    opts.mode = SelectMode::Sample;
    opts.reencode = ReencodePolicy::OnDepotReturn;
    opts.seed = derive_seed(68, Stream::Sampling, static_cast<std::uint64_t>(s));
    counts[construct(inst, params, opts).solution.visits] += 1;
  }

  int cells = 0, violations = 0;
  double worst_z = 0.0;
  for (const auto& [visits, p] : expected) {
    const double mu = samples * p;
    const double sigma = std::sqrt(samples * p * (1.0 - p));
    const double observed = counts.count(visits) ? counts.at(visits) : 0.0;
    ++cells;
    if (std::abs(observed - mu) > 3.0 * sigma + 1e-9) ++violations;
    if (sigma > 0.0) worst_z = std::max(worst_z, std::abs(observed - mu) / sigma);
  }
  for (const auto& [visits, count] : counts)
    if (!expected.count(visits)) ++violations;  // sampled something unreachable

  std::ostringstream detail;
  detail << cells << " trajectories, " << samples << " samples, worst |z|=" << worst_z
         << ", violations=" << violations;
  return {violations == 0, detail.str()};
}

// --- criterion 8: reproducibility ------------------------------------------------

Outcome criterion_reproducibility() {
  if (g_cli.empty() || !std::filesystem::exists(g_cli))
    return {false, "amdvrp binary not found (pass --cli)"};
  const std::string dir = fresh_dir("repro");
  const std::string config_path = dir + "/train.cfg";
  {
    std::ofstream cfg(config_path);
    cfg << "n = 6\ncapacity = 12\nepochs = 1\nsteps_per_epoch = 3\nbatch_size = 4\n"
        << "lr = 1e-4\ndim = 16\nlayers = 2\nheads = 2\nseed = 77\nworkers = 2\n";
  }
  const CliResult a =
      run_cli("train --config " + config_path + " --checkpoint-dir " + dir + "/run_a");
  const CliResult b =
      run_cli("train --config " + config_path + " --checkpoint-dir " + dir + "/run_b");
  if (a.exit_code != 0 || b.exit_code != 0) return {false, "cmd_train failed: " + a.out + b.out};
  const bool ckpt_match =
      read_bytes(dir + "/run_a/final.ckpt") == read_bytes(dir + "/run_b/final.ckpt") &&
      read_bytes(dir + "/run_a/epoch_0001.ckpt") == read_bytes(dir + "/run_b/epoch_0001.ckpt");

  const CliResult gen = run_cli("gen --n 10 --capacity 20 --count 1 --seed 5 --out " + dir);
  if (gen.exit_code != 0) return {false, "cmd_gen failed"};
  const std::string inst = dir + "/instance_00000.vrp";
  const CliResult s1 = run_cli("solve --checkpoint " + dir + "/run_a/final.ckpt --instance " +
                               inst + " --out " + dir + "/s1.sol");
  const CliResult s2 = run_cli("solve --checkpoint " + dir + "/run_a/final.ckpt --instance " +
                               inst + " --out " + dir + "/s2.sol");
  const bool solve_match = s1.exit_code == 0 && s2.exit_code == 0 && s1.out == s2.out &&
                           read_bytes(dir + "/s1.sol") == read_bytes(dir + "/s2.sol");

  std::ostringstream detail;
  detail << "checkpoints " << (ckpt_match ? "identical" : "DIFFER") << "; greedy solve "
         << (solve_match ? "identical" : "DIFFERS");
  return {ckpt_match && solve_match, detail.str()};
}

// --- criterion 9: capacity state machine -----------------------------------------

struct TrajectoryCensus {
  long states = 0;
  long violations = 0;
};

void walk_all(const VrpInstance& inst, const DecodeState& st, TrajectoryCensus& census) {
  // remaining capacity must equal capacity minus demand since the last depot
  int since_depot = 0;
  for (auto it = st.partial.rbegin(); it != st.partial.rend() && *it != 0; ++it)
    since_depot += inst.nodes[static_cast<std::size_t>(*it)].demand;
  ++census.states;
  if (st.remaining != inst.capacity - since_depot) ++census.violations;
  if (st.remaining < 0 || st.remaining > inst.capacity) ++census.violations;
  int in_partial = 0;
  for (int v : st.partial)
    if (v != 0) ++in_partial;
  if (in_partial != st.visited_count) ++census.violations;

  if (st.visited_count == inst.customer_count()) return;
  const auto mask = feasibility_mask(inst, st);
  for (int j = 0; j < inst.node_count(); ++j)
    if (mask[static_cast<std::size_t>(j)]) walk_all(inst, apply_move(inst, st, j), census);
}

Outcome criterion_state_machine() {
  Rng rng(69);
  TrajectoryCensus census;
  for (int trial = 0; trial < 12; ++trial) {
    const VrpInstance inst = generate_instance(4, rng.next_int(9, 14), rng.next_u64());
    walk_all(inst, initial_state(inst), census);
  }
  std::ostringstream detail;
  detail << census.states << " reachable states, " << census.violations << " violations";
  return {census.violations == 0 && census.states > 1000, detail.str()};
}

// --- criterion 6: desk-scale learning ----------------------------------------------

Outcome criterion_learning() {
  TrainConfig cfg;
  cfg.n = 7;
  cfg.capacity = 20;
  cfg.model = config(64, 3, 8);
  cfg.batch = 64;
  cfg.lr = 1e-4;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 1000;  // 3000 batches total
  cfg.seed = 123;
  cfg.workers = 0;  // all cores

  const int holdout = 100;
  const std::uint64_t holdout_seed = 900;

  const ModelParams untrained = ModelParams::init(cfg.model, cfg.seed);
  const EvalResult before = evaluate(untrained, cfg.n, cfg.capacity, holdout, SelectMode::Greedy,
                                     ReencodePolicy::OnDepotReturn, holdout_seed, 0);

  std::fprintf(stderr, "  [criterion 6] training dynamic policy (3000 batches)...\n");
  TrainConfig dyn = cfg;
  dyn.reencode = ReencodePolicy::OnDepotReturn;
  dyn.checkpoint_dir = fresh_dir("learn_dynamic");
  const TrainResult dyn_result = train(dyn);
  const EvalResult after = evaluate(dyn_result.params, cfg.n, cfg.capacity, holdout,
                                    SelectMode::Greedy, ReencodePolicy::OnDepotReturn,
                                    holdout_seed, 0);

  std::fprintf(stderr, "  [criterion 6] training static policy (same budget, same seeds)...\n");
  TrainConfig stat = cfg;
  stat.reencode = ReencodePolicy::Never;
  stat.checkpoint_dir = fresh_dir("learn_static");
  const TrainResult stat_result = train(stat);
  const EvalResult after_static = evaluate(stat_result.params, cfg.n, cfg.capacity, holdout,
                                           SelectMode::Greedy, ReencodePolicy::Never, holdout_seed,
                                           0);

  const double improvement = (before.mean - after.mean) / before.mean;
  const double gap = after.mean_gap.value_or(1e9);
  const bool pass_improvement = improvement >= 0.20;
  const bool pass_gap = gap <= 0.10;
  const bool pass_order = after.mean <= after_static.mean;

  std::ostringstream detail;
  detail << "untrained=" << before.mean << " dynamic=" << after.mean
         << " static=" << after_static.mean << " improvement=" << improvement * 100 << "%"
         << " gap=" << gap * 100 << "%" << (pass_improvement ? "" : " [improvement<20%]")
         << (pass_gap ? "" : " [gap>10%]") << (pass_order ? "" : " [dynamic>static]");
  return {pass_improvement && pass_gap && pass_order, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--cli") == 0 && i + 1 < argc) g_cli = argv[++i];
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  if (g_cli.empty())
    if (const char* env = std::getenv("AMD_CLI_BIN")) g_cli = env;

  std::vector<Check> checks = {
      {1, "gradient correctness", criterion_gradients},
      {2, "feasibility suite", criterion_feasibility},
      {3, "subinstance equivalence", criterion_subinstance},
      {4, "static reduction", criterion_static_reduction},
      {5, "oracle ordering", criterion_oracles},
      {7, "chain-rule fidelity", criterion_chain_rule},
      {8, "reproducibility", criterion_reproducibility},
      {9, "capacity state machine", criterion_state_machine},
      {6, "desk-scale learning", criterion_learning},  // slow; runs last
  };

  int failures = 0;
  for (const auto& check : checks) {
    if (only != 0 && check.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = check.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s — %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", check.id,
                check.name.c_str(), outcome.detail.c_str(), secs);
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures;
}
