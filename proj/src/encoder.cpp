#include "amd/encoder.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace amd {

void masked_softmax(const Vec& logits, const std::vector<char>& selectable, Vec& out) {
  const Eigen::Index n = logits.size();
  assert(static_cast<Eigen::Index>(selectable.size()) == n);
  out.resize(n);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < n; ++j)
    if (selectable[static_cast<std::size_t>(j)] && logits[j] > max_logit) max_logit = logits[j];
  assert(std::isfinite(max_logit) && "masked_softmax: no selectable entry");
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (selectable[static_cast<std::size_t>(j)]) {
      const double e = std::exp(logits[j] - max_logit);
      out[j] = e;
      total += e;
    } else {
      out[j] = 0.0;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j)
    if (selectable[static_cast<std::size_t>(j)]) out[j] /= total;
}

Mat init_embed(const VrpInstance& inst, const ModelParams& params) {
  const int nodes = inst.node_count();
  const int dim = params.cfg.dim;
  if (params.enc.w_cust.rows() != dim || params.enc.w_cust.cols() != 3)
    throw std::invalid_argument("init_embed: weight shape does not match model dim");
  Mat h0(dim, nodes);
  Eigen::Vector3d x;
  for (int i = 0; i < nodes; ++i) {
    const Node& node = inst.nodes[static_cast<std::size_t>(i)];
    if (i == 0) {
      x << node.x, node.y, 0.0;
      h0.col(i).noalias() = params.enc.w_depot * x;
      h0.col(i) += params.enc.b_depot;
    } else {
      x << node.x, node.y, static_cast<double>(node.demand) / inst.capacity;
      h0.col(i).noalias() = params.enc.w_cust * x;
      h0.col(i) += params.enc.b_cust;
    }
  }
  return h0;
}

void mha_sublayer(const Mat& h_in, const std::vector<char>& visited,
                  const EncoderLayerParams& layer, const ModelConfig& cfg, bool store_u,
                  LayerActivations& acts) {
  const int nodes = static_cast<int>(h_in.cols());
  const int heads = cfg.heads;
  const int hd = cfg.head_dim();
  assert(static_cast<int>(visited.size()) == nodes);
  assert(!visited[0] && "depot must never be masked as a key");

  acts.input = h_in;
  acts.q.resize(heads * hd, nodes);
  acts.k.resize(heads * hd, nodes);
  acts.v.resize(heads * hd, nodes);
  // columnwise products keep each node's values independent of node count
  for (int i = 0; i < nodes; ++i) {
    acts.q.col(i).noalias() = layer.attn.wq * h_in.col(i);
    acts.k.col(i).noalias() = layer.attn.wk * h_in.col(i);
    acts.v.col(i).noalias() = layer.attn.wv * h_in.col(i);
  }

  acts.a.assign(static_cast<std::size_t>(heads), Mat());
  if (store_u) acts.u.assign(static_cast<std::size_t>(heads), Mat());
  acts.head_out.resize(heads * hd, nodes);

  for (int m = 0; m < heads; ++m) {
    auto qm = acts.q.middleRows(m * hd, hd);
    auto km = acts.k.middleRows(m * hd, hd);
    auto vm = acts.v.middleRows(m * hd, hd);
    Mat& am = acts.a[static_cast<std::size_t>(m)];
    am.setZero(nodes, nodes);
    Mat* um = store_u ? &acts.u[static_cast<std::size_t>(m)] : nullptr;
    if (um) um->setConstant(nodes, nodes, kMaskedLogit);

    for (int i = 0; i < nodes; ++i) {
      double max_u = -std::numeric_limits<double>::infinity();
      // compatibilities over unmasked keys only; masked keys stay at -1e9
      for (int j = 0; j < nodes; ++j) {
        if (visited[static_cast<std::size_t>(j)]) continue;
        const double u = qm.col(i).dot(km.col(j));
        am(i, j) = u;  // staging area before normalization
        if (um) (*um)(i, j) = u;
        if (u > max_u) max_u = u;
      }
      double total = 0.0;
      for (int j = 0; j < nodes; ++j) {
        if (visited[static_cast<std::size_t>(j)]) continue;
        const double e = std::exp(am(i, j) - max_u);
        am(i, j) = e;
        total += e;
      }
      auto out_col = acts.head_out.col(i).segment(m * hd, hd);
      out_col.setZero();
      for (int j = 0; j < nodes; ++j) {
        if (visited[static_cast<std::size_t>(j)]) continue;
        const double w = am(i, j) / total;
        am(i, j) = w;
        out_col.noalias() += w * vm.col(j);
      }
    }
  }

  acts.mha.resize(cfg.dim, nodes);
  for (int i = 0; i < nodes; ++i) acts.mha.col(i).noalias() = layer.attn.wo * acts.head_out.col(i);
}

void ff_sublayer(const Mat& h_in, const Mat& mha, const EncoderLayerParams& layer,
                 LayerActivations& acts) {
  const int nodes = static_cast<int>(h_in.cols());
  const Eigen::Index dim = h_in.rows();
  const Eigen::Index ff = layer.ff.w0.rows();
  acts.hhat.resize(dim, nodes);
  acts.relu.resize(ff, nodes);
  acts.out.resize(dim, nodes);
  Vec z(ff), f(dim);
  for (int i = 0; i < nodes; ++i) {
    for (Eigen::Index r = 0; r < dim; ++r) acts.hhat(r, i) = std::tanh(h_in(r, i) + mha(r, i));
    z.noalias() = layer.ff.w0 * acts.hhat.col(i);
    z += layer.ff.b0;
    acts.relu.col(i) = z.cwiseMax(0.0);
    f.noalias() = layer.ff.w1 * acts.relu.col(i);
    f += layer.ff.b1;
    for (Eigen::Index r = 0; r < dim; ++r) acts.out(r, i) = std::tanh(acts.hhat(r, i) + f[r]);
  }
}

EmbeddingSet encode(const VrpInstance& inst, const std::vector<char>& visited,
                    const ModelParams& params, int epoch, EncoderActivations* acts) {
  if (static_cast<int>(visited.size()) != inst.node_count())
    throw std::invalid_argument("encode: mask size does not match node count");
  if (visited[0]) throw std::invalid_argument("encode: depot must not be masked");

  EncoderActivations scratch;
  EncoderActivations& store = acts ? *acts : scratch;
  store.h0 = init_embed(inst, params);
  const bool keep_layers = (acts != nullptr);
  if (keep_layers)
    store.layers.assign(static_cast<std::size_t>(params.cfg.layers), LayerActivations());
  else
    store.layers.assign(1, LayerActivations());

  Mat h = store.h0;
  for (int l = 0; l < params.cfg.layers; ++l) {
    LayerActivations& la = store.layers[keep_layers ? static_cast<std::size_t>(l) : 0];
    mha_sublayer(h, visited, params.enc.layers[static_cast<std::size_t>(l)], params.cfg,
                 keep_layers && store.store_u, la);
    ff_sublayer(h, la.mha, params.enc.layers[static_cast<std::size_t>(l)], la);
    h = la.out;
  }

  EmbeddingSet result;
  result.h = std::move(h);
  result.epoch = epoch;
  result.visited = visited;
  return result;
}

std::vector<char> no_visited(const VrpInstance& inst) {
  return std::vector<char>(static_cast<std::size_t>(inst.node_count()), 0);
}

}  // namespace amd
