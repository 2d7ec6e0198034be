#include "amd/rollout.hpp"

#include <cassert>
#include <cmath>

#include "amd/rng.hpp"

namespace amd {

namespace {

/// Drives one construction episode; selection is supplied by the caller.
class Engine {
 public:
  Engine(const VrpInstance& inst, const ModelParams& params, ReencodePolicy reencode,
         RolloutTape* tape)
      : inst_(inst), params_(params), reencode_(reencode), tape_(tape), st_(initial_state(inst)) {
    encode_now();
  }

  bool done() const { return st_.visited_count >= inst_.customer_count(); }
  const DecodeState& state() const { return st_; }
  const std::vector<char>& mask() const { return mask_; }
  const Vec& probs() const { return probs_; }
  int reencode_count() const { return reencode_count_; }
  int encode_passes() const { return encode_passes_; }

  /// Re-encodes if the previous move returned to the depot, then computes the
  /// selection distribution for the current step.
  void prepare_step() {
    if (st_.step > 1 && st_.last == 0 && reencode_ == ReencodePolicy::OnDepotReturn) {
      ++reencode_count_;
      encode_now();
    }
    mask_ = feasibility_mask(inst_, st_);
    StepRecord* rec = nullptr;
    if (tape_) {
      tape_->steps.emplace_back();
      rec = &tape_->steps.back();
      rec->epoch = static_cast<int>(tape_->epochs.size()) - 1;
      rec->last = st_.last;
      rec->mask = mask_;
    }
    const Vec ctx = build_context(inst_, emb_, st_, rec ? &rec->mean_nodes : nullptr);
    StepActivations* acts = rec ? &rec->acts : nullptr;
    const Vec hc = glimpse_cached(ctx, keys_, mask_, params_, acts);
    probs_ = output_distribution_cached(hc, keys_, mask_, params_, acts);
    if (rec) rec->hc_prime = ctx;
  }

  /// Applies the chosen node and accumulates its log-probability.
  double commit(int chosen) {
    if (chosen < 0 || chosen >= inst_.node_count() || !mask_[static_cast<std::size_t>(chosen)])
      throw InfeasibleTrajectory(st_.step, chosen);
    const double logp = std::log(probs_[chosen]);
    logprob_ += logp;
    if (tape_) {
      tape_->steps.back().chosen = chosen;
      tape_->logprob = logprob_;
    }
    st_ = apply_move(inst_, st_, chosen);
    return logp;
  }

  double logprob() const { return logprob_; }

 private:
  void encode_now() {
    ++encode_passes_;
    if (tape_) {
      tape_->epochs.emplace_back();
      EpochRecord& ep = tape_->epochs.back();
      ep.emb = encode(inst_, st_.visited, params_, encode_passes_ - 1, &ep.enc);
      ep.keys = make_key_cache(ep.emb, params_);
      emb_ = ep.emb;
      keys_ = ep.keys;
    } else {
      emb_ = encode(inst_, st_.visited, params_, encode_passes_ - 1);
      keys_ = make_key_cache(emb_, params_);
    }
  }

  const VrpInstance& inst_;
  const ModelParams& params_;
  ReencodePolicy reencode_;
  RolloutTape* tape_;
  DecodeState st_;
  EmbeddingSet emb_;
  DecoderKeyCache keys_;
  std::vector<char> mask_;
  Vec probs_;
  double logprob_ = 0.0;
  int reencode_count_ = 0;
  int encode_passes_ = 0;
};

int select_greedy(const Vec& probs, const std::vector<char>& mask) {
  int best = -1;
  double best_p = -1.0;
  for (int j = 0; j < probs.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    if (probs[j] > best_p) {  // strict: ties resolve to the lowest index
      best_p = probs[j];
      best = j;
    }
  }
  assert(best >= 0);
  return best;
}

int select_sample(const Vec& probs, const std::vector<char>& mask, Rng& rng) {
  const double r = rng.next_unit();
  double cum = 0.0;
  int last_selectable = -1;
  for (int j = 0; j < probs.size(); ++j) {
    if (!mask[static_cast<std::size_t>(j)]) continue;
    last_selectable = j;
    cum += probs[j];
    if (r < cum) return j;
  }
  assert(last_selectable >= 0);  // rounding left r >= cum; take the last mass
  return last_selectable;
}

}  // namespace

RolloutResult construct(const VrpInstance& inst, const ModelParams& params,
                        const RolloutOptions& options, RolloutTape* tape) {
  Engine engine(inst, params, options.reencode, tape);
  Rng rng(options.seed);
  RolloutResult result;
  while (!engine.done()) {
    engine.prepare_step();
    const int chosen = (options.mode == SelectMode::Greedy)
                           ? select_greedy(engine.probs(), engine.mask())
                           : select_sample(engine.probs(), engine.mask(), rng);
    if (options.probe) (*options.probe)(engine.state(), engine.mask(), engine.probs(), chosen);
    const double logp = engine.commit(chosen);
    if (options.keep_trace) result.trace.push_back({chosen, logp});
  }
  result.solution.visits = engine.state().partial;
  result.solution.length = tour_length(inst, result.solution);
  result.logprob = engine.logprob();
  result.reencode_count = engine.reencode_count();
  result.encode_passes = engine.encode_passes();
  return result;
}

double replay(const VrpInstance& inst, const ModelParams& params, const std::vector<int>& visits,
              ReencodePolicy reencode, RolloutTape* tape) {
  Engine engine(inst, params, reencode, tape);
  for (int v : visits) {
    if (engine.done()) throw InfeasibleTrajectory(engine.state().step, v);
    engine.prepare_step();
    engine.commit(v);
  }
  if (!engine.done())
    throw std::invalid_argument("replay: trajectory ends before all customers are visited");
  return engine.logprob();
}

double logprob_of(const VrpInstance& inst, const ModelParams& params, const Solution& sol,
                  ReencodePolicy reencode) {
  // the masks enforce exactly the solution invariants, so replay's per-step
  // checks subsume structural validation and name the offending step
  return replay(inst, params, sol.visits, reencode, nullptr);
}

}  // namespace amd
