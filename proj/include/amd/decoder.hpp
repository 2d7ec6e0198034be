#pragma once

#include <vector>

#include "amd/encoder.hpp"
#include "amd/model.hpp"
#include "amd/vrp.hpp"

namespace amd {

/// Construction state after t-1 moves. `last` is the node the vehicle sits at
/// (the depot before the first move). remaining == capacity - demand served
/// since the last depot visit.
struct DecodeState {
  std::vector<int> partial;
  std::vector<char> visited;  // indexed by node; [0] stays false
  int remaining = 0;
  int step = 1;
  int last = 0;
  int visited_count = 0;
};

DecodeState initial_state(const VrpInstance& inst);

/// Per-node selectability: a customer is selectable iff unvisited and its
/// demand fits the remaining capacity; the depot only when the vehicle is not
/// already there.
std::vector<char> feasibility_mask(const VrpInstance& inst, const DecodeState& st);

/// Decoder context vector [mean of unvisited embeddings (depot included);
/// embedding of the last-visited node; remaining/capacity]. Requires at least
/// one unvisited customer. Optionally reports which nodes were averaged.
Vec build_context(const VrpInstance& inst, const EmbeddingSet& emb, const DecodeState& st,
                  std::vector<int>* mean_nodes = nullptr);

/// Per-step decoder intermediates (kept for the backward pass).
struct StepActivations {
  Vec qg;      // glimpse queries, stacked heads (heads*head_dim)
  Mat ag;      // glimpse attention, (nodes, heads); masked entries exact 0
  Vec hp;      // per-head weighted values, stacked (heads*head_dim)
  Vec hc;      // glimpse output context (dim)
  Vec qout;    // output-head query (head_dim)
  Vec tanh_s;  // tanh(q.k_j) per node; 0 at masked
  Vec probs;   // selection distribution over nodes; masked exact 0
};

/// Keys/values projected from one epoch's embeddings; shared by every
/// decode step until the next re-encode.
struct DecoderKeyCache {
  Mat kg;    // glimpse keys (heads*head_dim, nodes)
  Mat vg;    // glimpse values (heads*head_dim, nodes)
  Mat kout;  // output-head keys (head_dim, nodes)
};

DecoderKeyCache make_key_cache(const EmbeddingSet& emb, const ModelParams& params);

/// Single-query multi-head attention over selectable nodes (the glimpse).
Vec glimpse_cached(const Vec& hc_prime, const DecoderKeyCache& keys,
                   const std::vector<char>& selectable, const ModelParams& params,
                   StepActivations* acts = nullptr);
Vec glimpse(const Vec& hc_prime, const EmbeddingSet& emb, const std::vector<char>& selectable,
            const ModelParams& params, StepActivations* acts = nullptr);

/// Selection probabilities: u_j = clip * tanh(q.k_j) on selectable nodes,
/// masked elsewhere; softmax over the selectable set.
Vec output_distribution_cached(const Vec& hc, const DecoderKeyCache& keys,
                               const std::vector<char>& selectable, const ModelParams& params,
                               StepActivations* acts = nullptr);
Vec output_distribution(const Vec& hc, const EmbeddingSet& emb,
                        const std::vector<char>& selectable, const ModelParams& params,
                        StepActivations* acts = nullptr);

/// State transition: depot resets the load, a customer consumes capacity.
/// Throws std::logic_error if `chosen` is not selectable.
DecodeState apply_move(const VrpInstance& inst, const DecodeState& st, int chosen);

}  // namespace amd
