#pragma once

#include <vector>

#include "amd/model.hpp"
#include "amd/vrp.hpp"

namespace amd {

/// Logit value standing in for -inf on masked entries; the corresponding
/// attention weights are forced to exactly 0.
inline constexpr double kMaskedLogit = -1e9;

/// Node embeddings, one column per node (column i = node i), produced by a
/// given encode epoch. `visited` is the key mask that epoch was encoded with
/// (true = node excluded as an attention key; the depot never is).
struct EmbeddingSet {
  Mat h;  // (dim, node_count)
  int epoch = 0;
  std::vector<char> visited;

  int node_count() const { return static_cast<int>(h.cols()); }
};

/// Everything one attention layer computes, kept for the backward pass and
/// for invariant checks. Attention matrices are (queries x keys) per head;
/// masked compatibilities hold kMaskedLogit and masked weights exact 0.
struct LayerActivations {
  Mat input;             // (dim, nodes)
  Mat q, k, v;           // (heads*head_dim, nodes)
  std::vector<Mat> u;    // per head (nodes, nodes); filled only when requested
  std::vector<Mat> a;    // per head (nodes, nodes)
  Mat head_out;          // per-head weighted values, stacked (heads*head_dim, nodes)
  Mat mha;               // (dim, nodes)
  Mat hhat;              // tanh(input + mha)
  Mat relu;              // ReLU(w0*hhat + b0), (ff_dim, nodes)
  Mat out;               // tanh(hhat + ff(hhat))
};

struct EncoderActivations {
  Mat h0;  // initial embeddings
  std::vector<LayerActivations> layers;
  bool store_u = false;
};

/// Softmax over entries with selectable[j] != 0; non-selectable entries get
/// probability exactly 0. `logits` for masked entries are ignored. At least
/// one entry must be selectable.
void masked_softmax(const Vec& logits, const std::vector<char>& selectable, Vec& out);

/// Layer-0 embeddings: affine map of (x, y, demand/capacity), with the
/// depot's own weights applied to (x, y, 0).
Mat init_embed(const VrpInstance& inst, const ModelParams& params);

/// One multi-head attention sublayer over all nodes; visited nodes are masked
/// as keys (never as queries), the depot is never masked. Fills acts.{input,
/// q,k,v,a,head_out,mha} (and u when acts.u is pre-sized via store_u).
void mha_sublayer(const Mat& h_in, const std::vector<char>& visited,
                  const EncoderLayerParams& layer, const ModelConfig& cfg, bool store_u,
                  LayerActivations& acts);

/// Skip + feed-forward sublayer: out = tanh(hhat + FF(hhat)) with
/// hhat = tanh(h_in + mha). Fills acts.{hhat, relu, out}.
void ff_sublayer(const Mat& h_in, const Mat& mha, const EncoderLayerParams& layer,
                 LayerActivations& acts);

/// Full encoder: N attention layers over the initial embeddings with the
/// given visited-key mask. The per-node computation is strictly columnwise,
/// so unmasked columns are bit-identical to encoding the reduced instance
/// that drops the masked customers.
EmbeddingSet encode(const VrpInstance& inst, const std::vector<char>& visited,
                    const ModelParams& params, int epoch = 0, EncoderActivations* acts = nullptr);

/// Convenience all-unvisited mask.
std::vector<char> no_visited(const VrpInstance& inst);

}  // namespace amd
