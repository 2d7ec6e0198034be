#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "amd/decoder.hpp"
#include "amd/encoder.hpp"
#include "amd/model.hpp"
#include "amd/vrp.hpp"

namespace amd {

enum class SelectMode { Greedy, Sample };
enum class ReencodePolicy { Never, OnDepotReturn };

struct StepTraceEntry {
  int chosen = 0;
  double logp = 0.0;
};

/// A constructed solution with its log-probability under the policy.
/// reencode_count counts encoder re-runs triggered by depot returns;
/// encode_passes includes the initial pass.
struct RolloutResult {
  Solution solution;
  double logprob = 0.0;
  int reencode_count = 0;
  int encode_passes = 0;
  std::vector<StepTraceEntry> trace;
};

/// Observer invoked once per decode step (feasibility diagnostics).
using StepProbe = std::function<void(const DecodeState& before, const std::vector<char>& mask,
                                     const Vec& probs, int chosen)>;

struct RolloutOptions {
  SelectMode mode = SelectMode::Greedy;
  ReencodePolicy reencode = ReencodePolicy::OnDepotReturn;
  std::uint64_t seed = 0;  // sampling stream; unused in greedy mode
  bool keep_trace = false;
  const StepProbe* probe = nullptr;
};

/// Full forward record of one rollout, enough to run the backward pass:
/// every encode epoch's activations plus every decode step's intermediates.
struct EpochRecord {
  EncoderActivations enc;
  EmbeddingSet emb;
  DecoderKeyCache keys;
};

struct StepRecord {
  int epoch = 0;
  int chosen = 0;
  int last = 0;
  std::vector<char> mask;        // selectable nodes at this step
  std::vector<int> mean_nodes;   // nodes averaged into the context mean
  Vec hc_prime;
  StepActivations acts;
};

struct RolloutTape {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  double logprob = 0.0;
};

/// Thrown when a forced trajectory picks a masked node.
struct InfeasibleTrajectory : std::runtime_error {
  int step;
  int node;
  InfeasibleTrajectory(int step_, int node_)
      : std::runtime_error("trajectory infeasible at step " + std::to_string(step_) + ": node " +
                           std::to_string(node_) + " is masked"),
        step(step_),
        node(node_) {}
};

/// Builds a solution by iterated decoding; embeddings are recomputed with the
/// current visited set whenever the vehicle returns to the depot (if enabled).
/// Construction stops once every customer is visited; the final depot-return
/// leg counts toward the length but is not a decision.
RolloutResult construct(const VrpInstance& inst, const ModelParams& params,
                        const RolloutOptions& options, RolloutTape* tape = nullptr);

/// Teacher-forced re-evaluation: the log-probability construct() would have
/// recorded for exactly these choices. Validates the solution; throws
/// InfeasibleTrajectory if a prefix violates the masks.
double logprob_of(const VrpInstance& inst, const ModelParams& params, const Solution& sol,
                  ReencodePolicy reencode);

/// Teacher-forced forward that also fills the tape (shared by logprob_grad).
double replay(const VrpInstance& inst, const ModelParams& params, const std::vector<int>& visits,
              ReencodePolicy reencode, RolloutTape* tape);

}  // namespace amd
