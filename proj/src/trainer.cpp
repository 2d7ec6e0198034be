#include "amd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "amd/autodiff.hpp"
#include "amd/baselines.hpp"
#include "amd/checkpoint.hpp"
#include "amd/parallel.hpp"
#include "amd/rng.hpp"

namespace amd {

int default_capacity(int n) {
  if (n <= 20) return 30;
  if (n <= 50) return 40;
  return 50;
}

void TrainConfig::apply_defaults() {
  if (capacity == 0) capacity = default_capacity(n);
  if (batch == 0) batch = (n >= 100) ? 108 : 128;
  if (lr == 0.0) lr = (n >= 100) ? 5e-5 : 1e-4;
  if (workers == 0) workers = default_workers();
  if (metrics_path.empty()) metrics_path = checkpoint_dir + "/metrics.csv";
}

void TrainConfig::validate() const {
  if (n < 1) throw std::invalid_argument("train config: n must be >= 1");
  if (capacity < 9) throw std::invalid_argument("train config: capacity must be >= 9");
  if (epochs < 1 || steps_per_epoch < 1)
    throw std::invalid_argument("train config: epochs and steps_per_epoch must be >= 1");
  if (batch < 1) throw std::invalid_argument("train config: batch size must be >= 1");
  if (lr <= 0.0) throw std::invalid_argument("train config: learning rate must be positive");
  if (grad_clip < 0.0) throw std::invalid_argument("train config: grad_clip must be >= 0");
  model.validate();
}

namespace {

struct InstanceOutcome {
  double sample_len = 0.0;
  double greedy_len = 0.0;
  std::unique_ptr<GradientSet> grad;  // null when the advantage is exactly 0
};

constexpr int kReduceChunk = 16;  // fixed, so reductions are worker-count independent

}  // namespace

std::pair<GradientSet, BatchStats> batch_gradient(const std::vector<VrpInstance>& instances,
                                                  const ModelParams& params,
                                                  ReencodePolicy reencode, std::uint64_t seed,
                                                  std::uint64_t step_index, int workers) {
  const int batch = static_cast<int>(instances.size());
  if (batch < 1) throw std::invalid_argument("batch_gradient: empty batch");

  GradientSet total = ModelParams::zeros(params.cfg);
  BatchStats stats;

  std::vector<InstanceOutcome> outcomes(static_cast<std::size_t>(kReduceChunk));
  for (int base = 0; base < batch; base += kReduceChunk) {
    const int chunk = std::min(kReduceChunk, batch - base);
    parallel_for(chunk, workers, [&](int offset) {
      const int i = base + offset;
      const VrpInstance& inst = instances[static_cast<std::size_t>(i)];
      InstanceOutcome& out = outcomes[static_cast<std::size_t>(offset)];

      RolloutOptions sample_opts;
      sample_opts.mode = SelectMode::Sample;
      sample_opts.reencode = reencode;
      sample_opts.seed =
          derive_seed(seed, Stream::Sampling, step_index, static_cast<std::uint64_t>(i));
      RolloutTape tape;
      const RolloutResult sampled = construct(inst, params, sample_opts, &tape);

      RolloutOptions greedy_opts;
      greedy_opts.mode = SelectMode::Greedy;
      greedy_opts.reencode = reencode;
      const RolloutResult greedy = construct(inst, params, greedy_opts);

      out.sample_len = sampled.solution.length;
      out.greedy_len = greedy.solution.length;
      out.grad.reset();
      if (sampled.solution.length != greedy.solution.length) {
        // backward over the recorded sample tape; the greedy baseline is a
        // constant with respect to the parameters
        out.grad = std::make_unique<GradientSet>(backward_from_tape(inst, params, tape));
      }
    });
    for (int offset = 0; offset < chunk; ++offset) {
      InstanceOutcome& out = outcomes[static_cast<std::size_t>(offset)];
      stats.mean_sample_len += out.sample_len;
      stats.mean_greedy_len += out.greedy_len;
      if (out.grad) axpy(total, *out.grad, out.sample_len - out.greedy_len);
      out.grad.reset();
    }
  }

  scale(total, 1.0 / batch);
  stats.mean_sample_len /= batch;
  stats.mean_greedy_len /= batch;
  stats.mean_advantage = stats.mean_sample_len - stats.mean_greedy_len;
  return {std::move(total), stats};
}

AdamState AdamState::make(const ModelConfig& cfg) {
  AdamState s;
  s.m = ModelParams::zeros(cfg);
  s.v = ModelParams::zeros(cfg);
  return s;
}

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr) {
  visit_tensors(grads, [&](const std::string& path, const double* data, Eigen::Index rows,
                           Eigen::Index cols, int) {
    const Eigen::Index size = rows * cols;
    for (Eigen::Index i = 0; i < size; ++i) {
      if (!std::isfinite(data[i]))
        throw std::runtime_error("adam_step: non-finite gradient in " + path);
    }
  });

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::vector<TensorView> pv, gv, mv, vv;
  visit_tensors(params, [&](const TensorView& t) { pv.push_back(t); });
  visit_tensors(const_cast<GradientSet&>(grads), [&](const TensorView& t) { gv.push_back(t); });
  visit_tensors(state.m, [&](const TensorView& t) { mv.push_back(t); });
  visit_tensors(state.v, [&](const TensorView& t) { vv.push_back(t); });

  for (std::size_t t = 0; t < pv.size(); ++t) {
    const Eigen::Index size = pv[t].size();
    if (gv[t].size() != size) throw std::invalid_argument("adam_step: shape mismatch at " + pv[t].path);
    double* p = pv[t].data;
    const double* g = gv[t].data;
    double* m = mv[t].data;
    double* v = vv[t].data;
    for (Eigen::Index i = 0; i < size; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

TrainResult train(const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in;
  cfg.apply_defaults();
  cfg.validate();

  std::filesystem::create_directories(cfg.checkpoint_dir);
  std::ofstream metrics(cfg.metrics_path, std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot open metrics file: " + cfg.metrics_path);
  metrics << "step,epoch,mean_sample_len,mean_greedy_len,mean_advantage,wallclock_s\n";

  ModelParams params = ModelParams::init(cfg.model, cfg.seed);
  AdamState adam = AdamState::make(cfg.model);

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  std::uint64_t gstep = 0;
  std::vector<VrpInstance> batch(static_cast<std::size_t>(cfg.batch));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int step = 1; step <= cfg.steps_per_epoch; ++step) {
      for (int i = 0; i < cfg.batch; ++i) {
        batch[static_cast<std::size_t>(i)] = generate_instance(
            cfg.n, cfg.capacity,
            derive_seed(cfg.seed, Stream::TrainInstances, gstep, static_cast<std::uint64_t>(i)));
      }
      auto [grads, stats] = batch_gradient(batch, params, cfg.reencode, cfg.seed, gstep,
                                           cfg.workers);
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(flatten(grads).squaredNorm());
        if (norm > cfg.grad_clip) scale(grads, cfg.grad_clip / norm);
      }
      adam_step(params, grads, adam, cfg.lr);
      ++gstep;

      const double wallclock =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char line[256];
      std::snprintf(line, sizeof(line), "%llu,%d,%.6f,%.6f,%.6f,%.3f\n",
                    static_cast<unsigned long long>(gstep), epoch, stats.mean_sample_len,
                    stats.mean_greedy_len, stats.mean_advantage, wallclock);
      metrics << line;
      metrics.flush();
    }
    char name[64];
    std::snprintf(name, sizeof(name), "/epoch_%04d.ckpt", epoch);
    const std::string path = cfg.checkpoint_dir + name;
    save_checkpoint(path, params);
    result.epoch_checkpoints.push_back(path);
  }

  result.final_checkpoint = cfg.checkpoint_dir + "/final.ckpt";
  save_checkpoint(result.final_checkpoint, params);
  result.params = std::move(params);
  return result;
}

EvalResult evaluate(const ModelParams& params, int n, int capacity, int count, SelectMode mode,
                    ReencodePolicy reencode, std::uint64_t seed, int workers) {
  if (count < 1) throw std::invalid_argument("evaluate: count must be >= 1");
  if (workers == 0) workers = default_workers();

  EvalResult result;
  result.lengths.assign(static_cast<std::size_t>(count), 0.0);
  const bool with_gap = (n <= 7);
  if (with_gap) result.gaps.assign(static_cast<std::size_t>(count), 0.0);

  parallel_for(count, workers, [&](int i) {
    const VrpInstance inst = generate_instance(
        n, capacity, derive_seed(seed, Stream::EvalInstances, static_cast<std::uint64_t>(i)));
    RolloutOptions opts;
    opts.mode = mode;
    opts.reencode = reencode;
    opts.seed = derive_seed(seed, Stream::EvalSampling, static_cast<std::uint64_t>(i));
    const RolloutResult rollout = construct(inst, params, opts);
    result.lengths[static_cast<std::size_t>(i)] = rollout.solution.length;
    if (with_gap) {
      const Solution opt = brute_force_optimal(inst);
      result.gaps[static_cast<std::size_t>(i)] =
          (rollout.solution.length - opt.length) / opt.length;
    }
  });

  double sum = 0.0;
  for (double len : result.lengths) sum += len;
  result.mean = sum / count;
  double var = 0.0;
  for (double len : result.lengths) var += (len - result.mean) * (len - result.mean);
  result.stddev = (count > 1) ? std::sqrt(var / (count - 1)) : 0.0;
  if (with_gap) {
    double gap_sum = 0.0;
    for (double gap : result.gaps) gap_sum += gap;
    result.mean_gap = gap_sum / count;
  }
  return result;
}

}  // namespace amd
