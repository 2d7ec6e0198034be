// amdvrp: train, evaluate and run attention-based construction policies for
// the capacitated VRP, plus instance generation, validation and 2-OPT.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "amd/autodiff.hpp"
#include "amd/baselines.hpp"
#include "amd/checkpoint.hpp"
#include "amd/parallel.hpp"
#include "amd/rng.hpp"
#include "amd/rollout.hpp"
#include "amd/trainer.hpp"
#include "amd/vrp.hpp"

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("AMD_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw UsageError("AMD_SEED is not an unsigned integer");
    return static_cast<std::uint64_t>(v);
  }
  return 1;
}

amd::ReencodePolicy parse_reencode(const std::string& value) {
  if (value == "on_depot_return") return amd::ReencodePolicy::OnDepotReturn;
  if (value == "never") return amd::ReencodePolicy::Never;
  throw UsageError("reencode must be 'on_depot_return' or 'never', got '" + value + "'");
}

amd::SelectMode parse_mode(const std::string& value) {
  if (value == "greedy") return amd::SelectMode::Greedy;
  if (value == "sample") return amd::SelectMode::Sample;
  throw UsageError("mode must be 'greedy' or 'sample', got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long to_long(const std::string& v, const std::string& key, std::size_t line) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("config line " + std::to_string(line) + ": key '" + key +
                     "' expects an integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& v, const std::string& key, std::size_t line) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw UsageError("config line " + std::to_string(line) + ": key '" + key +
                     "' expects a number, got '" + v + "'");
  return x;
}

amd::TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  amd::TrainConfig cfg;
  bool have_n = false;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "n") {
      cfg.n = static_cast<int>(to_long(value, key, lineno));
      have_n = true;
    } else if (key == "capacity") {
      cfg.capacity = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "steps_per_epoch") {
      cfg.steps_per_epoch = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "batch_size") {
      cfg.batch = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "lr") {
      cfg.lr = to_double(value, key, lineno);
    } else if (key == "dim") {
      cfg.model.dim = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "layers") {
      cfg.model.layers = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "heads") {
      cfg.model.heads = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "clip") {
      cfg.model.clip = to_double(value, key, lineno);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_long(value, key, lineno));
    } else if (key == "reencode") {
      cfg.reencode = parse_reencode(value);
    } else if (key == "checkpoint_dir") {
      cfg.checkpoint_dir = value;
    } else if (key == "metrics_path") {
      cfg.metrics_path = value;
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(to_long(value, key, lineno));
    } else if (key == "grad_clip") {
      cfg.grad_clip = to_double(value, key, lineno);
    } else {
      throw UsageError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!have_n) throw UsageError("missing required key: n");
  return cfg;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int n = 0;
  int capacity = 0;
  int count = 1;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void run_gen(const GenArgs& a) {
  if (a.count < 1) throw UsageError("count must be >= 1");
  const int capacity = a.capacity > 0 ? a.capacity : amd::default_capacity(a.n);
  const std::uint64_t seed = resolve_seed(a.seed);
  std::filesystem::create_directories(a.out);
  for (int i = 0; i < a.count; ++i) {
    const amd::VrpInstance inst =
        amd::generate_instance(a.n, capacity, seed + static_cast<std::uint64_t>(i));
    char name[64];
    std::snprintf(name, sizeof(name), "/instance_%05d.vrp", i);
    const std::string path = a.out + name;
    amd::write_instance(path, inst);
    std::cout << path << "\n";
  }
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> epochs;
  std::optional<int> steps;
  std::optional<std::string> reencode;
  std::optional<std::string> checkpoint_dir;
};

void run_train(const TrainArgs& a) {
  amd::TrainConfig cfg = parse_train_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.steps) cfg.steps_per_epoch = *a.steps;
  if (a.reencode) cfg.reencode = parse_reencode(*a.reencode);
  if (a.checkpoint_dir) cfg.checkpoint_dir = *a.checkpoint_dir;
  try {
    cfg.apply_defaults();
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const amd::TrainResult result = amd::train(cfg);
  std::cout << result.final_checkpoint << "\n";
}

struct SolveArgs {
  std::string checkpoint;
  std::string instance;
  std::string mode = "greedy";
  std::string reencode = "on_depot_return";
  bool improve = false;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void run_solve(const SolveArgs& a) {
  const amd::ModelParams params = amd::load_checkpoint(a.checkpoint);
  const amd::VrpInstance inst = amd::read_instance(a.instance);
  amd::RolloutOptions opts;
  opts.mode = parse_mode(a.mode);
  opts.reencode = parse_reencode(a.reencode);
  opts.seed = amd::derive_seed(resolve_seed(a.seed), amd::Stream::Sampling);
  amd::Solution sol = amd::construct(inst, params, opts).solution;
  if (a.improve) sol = amd::two_opt(inst, sol);
  const std::string out = a.out.empty() ? a.instance + ".sol" : a.out;
  amd::write_solution(out, sol);
  std::printf("%.4f\n", sol.length);
}

struct ImproveArgs {
  std::string instance;
  std::string solution;
  std::string out;
};

void run_improve(const ImproveArgs& a) {
  const amd::VrpInstance inst = amd::read_instance(a.instance);
  const amd::Solution sol = amd::read_solution(a.solution);
  const amd::Solution improved = amd::two_opt(inst, sol);
  const std::string out = a.out.empty() ? a.solution + ".2opt" : a.out;
  amd::write_solution(out, improved);
  std::printf("%.4f\n", improved.length);
}

struct ValidateArgs {
  std::string instance;
  std::string solution;
};

void run_validate(const ValidateArgs& a) {
  const amd::VrpInstance inst = amd::read_instance(a.instance);
  const amd::Solution sol = amd::read_solution(a.solution);
  if (const auto violation = amd::validate_solution(inst, sol))
    throw std::runtime_error("invalid solution: " + violation->message);
  std::printf("ok %.4f\n", amd::tour_length(inst, sol));
}

struct EvalArgs {
  std::string checkpoint;
  int n = 0;
  int capacity = 0;
  int count = 1000;
  std::optional<std::uint64_t> seed;
  std::string mode = "greedy";
  std::string reencode = "on_depot_return";
  int workers = 0;
  bool per_instance = false;
};

void run_eval(const EvalArgs& a) {
  if (a.count < 1) throw UsageError("count must be >= 1");
  const amd::ModelParams params = amd::load_checkpoint(a.checkpoint);
  const int capacity = a.capacity > 0 ? a.capacity : amd::default_capacity(a.n);
  const amd::EvalResult result =
      amd::evaluate(params, a.n, capacity, a.count, parse_mode(a.mode), parse_reencode(a.reencode),
                    resolve_seed(a.seed), a.workers);
  if (a.per_instance)
    for (double len : result.lengths) std::printf("%.4f\n", len);
  std::printf("count=%d mean=%.4f stddev=%.4f", a.count, result.mean, result.stddev);
  if (result.mean_gap) std::printf(" mean_gap=%.4f", *result.mean_gap);
  std::printf("\n");
}

struct GradcheckArgs {
  int dim = 16;
  int layers = 2;
  int heads = 2;
  int n = 6;
  int capacity = 10;
  int coords = 120;
  std::optional<std::uint64_t> seed;
  std::string reencode = "on_depot_return";
  bool corrupt = false;
};

void run_gradcheck(const GradcheckArgs& a) {
  amd::ModelConfig mc;
  mc.dim = a.dim;
  mc.layers = a.layers;
  mc.heads = a.heads;
  const std::uint64_t seed = resolve_seed(a.seed);
  const amd::VrpInstance inst = amd::generate_instance(a.n, a.capacity, seed);
  const amd::ModelParams params = amd::ModelParams::init(mc, seed);
  amd::RolloutOptions opts;
  opts.mode = amd::SelectMode::Sample;
  opts.reencode = parse_reencode(a.reencode);
  opts.seed = amd::derive_seed(seed, amd::Stream::Sampling);
  const amd::Solution sol = amd::construct(inst, params, opts).solution;

  amd::FiniteDiffOptions fd;
  fd.coordinates = a.coords;
  fd.seed = seed;
  fd.corrupt_largest = a.corrupt;
  const amd::FiniteDiffReport report =
      amd::finite_diff_check(inst, params, sol, opts.reencode, fd);
  if (report.pass) {
    std::printf("PASS max_rel_err=%.3e coords=%d\n", report.max_rel_err, report.coordinates);
  } else {
    std::printf("FAIL max_rel_err=%.3e worst=%s[%ld] analytic=%.6e numeric=%.6e\n",
                report.max_rel_err, report.worst_path.c_str(), report.worst_index,
                report.worst_analytic, report.worst_numeric);
    throw std::runtime_error("gradient check failed");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-based construction policies for the capacitated VRP"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "generate random instances");
  cmd_gen->add_option("--n", gen.n, "customers per instance")->required();
  cmd_gen->add_option("--capacity", gen.capacity, "vehicle capacity (default by size)");
  cmd_gen->add_option("--count", gen.count, "number of instances");
  cmd_gen->add_option("--seed", gen.seed, "base seed (instance i uses seed+i)");
  cmd_gen->add_option("--out", gen.out, "output directory");
  cmd_gen->callback([&] { run_gen(gen); });

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "train a policy (key=value config file)");
  cmd_train->add_option("--config", train.config, "config file")->required();
  cmd_train->add_option("--seed", train.seed, "override config seed");
  cmd_train->add_option("--workers", train.workers, "override worker count");
  cmd_train->add_option("--epochs", train.epochs, "override epoch count");
  cmd_train->add_option("--steps", train.steps, "override steps per epoch");
  cmd_train->add_option("--reencode", train.reencode, "on_depot_return|never");
  cmd_train->add_option("--checkpoint-dir", train.checkpoint_dir, "override checkpoint dir");
  cmd_train->callback([&] { run_train(train); });

  SolveArgs solve;
  auto* cmd_solve = app.add_subcommand("solve", "construct a solution for an instance file");
  cmd_solve->add_option("--checkpoint", solve.checkpoint, "model checkpoint")->required();
  cmd_solve->add_option("--instance", solve.instance, "instance file")->required();
  cmd_solve->add_option("--mode", solve.mode, "greedy|sample");
  cmd_solve->add_option("--reencode", solve.reencode, "on_depot_return|never");
  cmd_solve->add_flag("--two-opt", solve.improve, "apply 2-OPT to the constructed solution");
  cmd_solve->add_option("--seed", solve.seed, "sampling seed");
  cmd_solve->add_option("--out", solve.out, "solution output path (default <instance>.sol)");
  cmd_solve->callback([&] { run_solve(solve); });

  ImproveArgs improve;
  auto* cmd_improve = app.add_subcommand("improve", "2-OPT an existing solution file");
  cmd_improve->add_option("--instance", improve.instance, "instance file")->required();
  cmd_improve->add_option("--solution", improve.solution, "solution file")->required();
  cmd_improve->add_option("--out", improve.out, "output path (default <solution>.2opt)");
  cmd_improve->callback([&] { run_improve(improve); });

  ValidateArgs validate;
  auto* cmd_validate = app.add_subcommand("validate", "check a solution file");
  cmd_validate->add_option("--instance", validate.instance, "instance file")->required();
  cmd_validate->add_option("--solution", validate.solution, "solution file")->required();
  cmd_validate->callback([&] { run_validate(validate); });

  EvalArgs eval;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on generated instances");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required();
  cmd_eval->add_option("--n", eval.n, "customers per instance")->required();
  cmd_eval->add_option("--capacity", eval.capacity, "vehicle capacity (default by size)");
  cmd_eval->add_option("--count", eval.count, "number of instances");
  cmd_eval->add_option("--seed", eval.seed, "instance stream seed");
  cmd_eval->add_option("--mode", eval.mode, "greedy|sample");
  cmd_eval->add_option("--reencode", eval.reencode, "on_depot_return|never");
  cmd_eval->add_option("--workers", eval.workers, "parallel rollouts");
  cmd_eval->add_flag("--per-instance", eval.per_instance, "print one length per instance");
  cmd_eval->callback([&] { run_eval(eval); });

  GradcheckArgs gradcheck;
  auto* cmd_gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
  cmd_gradcheck->add_option("--dim", gradcheck.dim, "embedding width");
  cmd_gradcheck->add_option("--layers", gradcheck.layers, "encoder layers");
  cmd_gradcheck->add_option("--heads", gradcheck.heads, "attention heads");
  cmd_gradcheck->add_option("--n", gradcheck.n, "customers");
  cmd_gradcheck->add_option("--capacity", gradcheck.capacity, "vehicle capacity");
  cmd_gradcheck->add_option("--coords", gradcheck.coords, "sampled coordinates");
  cmd_gradcheck->add_option("--seed", gradcheck.seed, "seed");
  cmd_gradcheck->add_option("--reencode", gradcheck.reencode, "on_depot_return|never");
  cmd_gradcheck->add_flag("--corrupt", gradcheck.corrupt,
                          "negative control: corrupt one gradient entry");
  cmd_gradcheck->callback([&] { run_gradcheck(gradcheck); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
