#pragma once

#include <string>
#include <utility>

#include "amd/model.hpp"
#include "amd/rollout.hpp"
#include "amd/vrp.hpp"

namespace amd {

/// Exact reverse-mode derivative of the rollout log-probability with respect
/// to every parameter, following every path through every encode epoch the
/// trajectory triggered. Hand-written backward passes over the recorded tape.
std::pair<double, GradientSet> logprob_grad(const VrpInstance& inst, const ModelParams& params,
                                            const Solution& sol, ReencodePolicy reencode);

/// Backward pass over an already-recorded forward tape (as produced by
/// construct or replay with a tape argument).
GradientSet backward_from_tape(const VrpInstance& inst, const ModelParams& params,
                               const RolloutTape& tape);

/// VJP through the skip + feed-forward sublayer. Returns d<g_out, out>/d(h_in)
/// with the MHA vectors held fixed; by the skip structure this equals the
/// gradient with respect to the MHA vectors. Accumulates into *ff_grads when
/// given. `la` must hold the sublayer's forward activations.
Mat ff_sublayer_backward(const LayerActivations& la, const EncoderLayerParams& lp,
                         const Mat& g_out, FeedForward* ff_grads);

/// VJP through the multi-head attention sublayer: gradient with respect to its
/// input embeddings. Accumulates into *attn_grads when given.
Mat mha_sublayer_backward(const LayerActivations& la, const EncoderLayerParams& lp,
                          const ModelConfig& cfg, const Mat& g_mha, AttentionWeights* attn_grads);

struct FiniteDiffOptions {
  int coordinates = 120;         // sampled parameter coordinates
  double step = 1e-5;            // central-difference half-step h
  double tolerance = 1e-4;       // max relative error accepted
  std::uint64_t seed = 0;        // coordinate sampling stream
  bool corrupt_largest = false;  // negative control: double the largest analytic
                                 // entry and force-check that coordinate
};

struct FiniteDiffReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst_path;
  long worst_index = -1;  // flat coordinate of the worst error
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int coordinates = 0;
};

/// Perturbs sampled coordinates by +/-h, recomputes the log-probability, and
/// compares central differences against logprob_grad. Relative error uses
/// denominator max(|analytic|, |numeric|, 1e-8).
FiniteDiffReport finite_diff_check(const VrpInstance& inst, const ModelParams& params,
                                   const Solution& sol, ReencodePolicy reencode,
                                   const FiniteDiffOptions& options);

}  // namespace amd
