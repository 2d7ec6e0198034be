#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amd/model.hpp"
#include "amd/rollout.hpp"
#include "amd/vrp.hpp"

namespace amd {

/// Training run description. Zero-valued batch/lr/capacity fields pick the
/// size-dependent defaults (batch 128 and lr 1e-4 up to n=50, batch 108 and
/// lr 5e-5 beyond; capacity 30/40/50 for n<=20/50/larger).
struct TrainConfig {
  int n = 0;  // customers per instance; required
  int capacity = 0;
  int epochs = 30;
  int steps_per_epoch = 10000;
  int batch = 0;
  double lr = 0.0;
  ModelConfig model;
  std::uint64_t seed = 1;
  ReencodePolicy reencode = ReencodePolicy::OnDepotReturn;
  std::string checkpoint_dir = "checkpoints";
  std::string metrics_path;  // empty: <checkpoint_dir>/metrics.csv
  int workers = 0;           // 0: hardware concurrency
  double grad_clip = 0.0;    // max gradient norm; 0 disables clipping

  void apply_defaults();
  void validate() const;  // throws std::invalid_argument
};

struct BatchStats {
  double mean_sample_len = 0.0;
  double mean_greedy_len = 0.0;
  double mean_advantage = 0.0;
};

/// One REINFORCE batch: per instance, a sampled rollout and a fresh greedy
/// baseline rollout with the current parameters; the gradient is
/// mean_i (L(sample_i) - L(greedy_i)) * dlogprob(sample_i). Per-rollout
/// sampling streams derive from (seed, step_index, i); the reduction runs in
/// instance order, so results do not depend on the worker count.
std::pair<GradientSet, BatchStats> batch_gradient(const std::vector<VrpInstance>& instances,
                                                  const ModelParams& params,
                                                  ReencodePolicy reencode, std::uint64_t seed,
                                                  std::uint64_t step_index, int workers);

struct AdamState {
  ModelParams m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(const ModelConfig& cfg);
};

/// Descent step on the expected tour length: params -= lr * mhat / (sqrt(vhat) + eps).
/// Throws on non-finite gradient entries, naming the parameter path.
void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr);

struct TrainResult {
  ModelParams params;
  std::string final_checkpoint;
  std::vector<std::string> epoch_checkpoints;
};

/// Algorithm: E epochs x F steps of (generate batch, batch_gradient,
/// adam_step); per-epoch checkpoints plus final.ckpt in checkpoint_dir; one
/// metrics CSV record per step. Bitwise reproducible from the config.
TrainResult train(const TrainConfig& cfg);

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> lengths;
  std::optional<double> mean_gap;  // vs brute_force_optimal; only for n <= 7
  std::vector<double> gaps;
};

/// Deterministic evaluation over `count` instances generated from
/// (seed, instance index). Greedy mode ignores sampling streams.
EvalResult evaluate(const ModelParams& params, int n, int capacity, int count, SelectMode mode,
                    ReencodePolicy reencode, std::uint64_t seed, int workers);

/// Size-dependent default capacity (30/40/50 for n<=20/50/larger).
int default_capacity(int n);

}  // namespace amd
