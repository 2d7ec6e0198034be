#include "amd/decoder.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace amd {

DecodeState initial_state(const VrpInstance& inst) {
  DecodeState st;
  st.visited.assign(static_cast<std::size_t>(inst.node_count()), 0);
  st.remaining = inst.capacity;
  st.step = 1;
  st.last = 0;
  return st;
}

std::vector<char> feasibility_mask(const VrpInstance& inst, const DecodeState& st) {
  const int nodes = inst.node_count();
  std::vector<char> mask(static_cast<std::size_t>(nodes), 0);
  mask[0] = (st.last != 0) ? 1 : 0;  // no consecutive depot visits; at t=1 the vehicle is there
  for (int j = 1; j < nodes; ++j) {
    if (!st.visited[static_cast<std::size_t>(j)] &&
        inst.nodes[static_cast<std::size_t>(j)].demand <= st.remaining)
      mask[static_cast<std::size_t>(j)] = 1;
  }
  return mask;
}

Vec build_context(const VrpInstance& inst, const EmbeddingSet& emb, const DecodeState& st,
                  std::vector<int>* mean_nodes) {
  const int nodes = emb.node_count();
  const Eigen::Index dim = emb.h.rows();
  if (st.visited_count >= inst.customer_count())
    throw std::logic_error("build_context: no unvisited customer left");

  Vec sum = Vec::Zero(dim);
  int count = 0;
  if (mean_nodes) mean_nodes->clear();
  for (int i = 0; i < nodes; ++i) {
    if (i == 0 || !st.visited[static_cast<std::size_t>(i)]) {
      sum += emb.h.col(i);
      ++count;
      if (mean_nodes) mean_nodes->push_back(i);
    }
  }

  Vec ctx(2 * dim + 1);
  ctx.head(dim) = sum / static_cast<double>(count);
  ctx.segment(dim, dim) = emb.h.col(st.last);
  ctx[2 * dim] = static_cast<double>(st.remaining) / static_cast<double>(inst.capacity);
  return ctx;
}

DecoderKeyCache make_key_cache(const EmbeddingSet& emb, const ModelParams& params) {
  DecoderKeyCache keys;
  keys.kg.noalias() = params.dec.glimpse.wk * emb.h;
  keys.vg.noalias() = params.dec.glimpse.wv * emb.h;
  keys.kout.noalias() = params.dec.out_wk * emb.h;
  return keys;
}

Vec glimpse_cached(const Vec& hc_prime, const DecoderKeyCache& keys,
                   const std::vector<char>& selectable, const ModelParams& params,
                   StepActivations* acts) {
  const int nodes = static_cast<int>(keys.kg.cols());
  const int heads = params.cfg.heads;
  const int hd = params.cfg.head_dim();
  assert(static_cast<int>(selectable.size()) == nodes);

  Vec qg = params.dec.glimpse.wq * hc_prime;
  Mat ag = Mat::Zero(nodes, heads);
  Vec hp(heads * hd);
  Vec logits(nodes);
  for (int m = 0; m < heads; ++m) {
    auto qm = qg.segment(m * hd, hd);
    auto km = keys.kg.middleRows(m * hd, hd);
    auto vm = keys.vg.middleRows(m * hd, hd);
    double max_u = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nodes; ++j) {
      if (!selectable[static_cast<std::size_t>(j)]) continue;
      logits[j] = qm.dot(km.col(j));
      if (logits[j] > max_u) max_u = logits[j];
    }
    assert(std::isfinite(max_u) && "glimpse: nothing selectable");
    double total = 0.0;
    for (int j = 0; j < nodes; ++j) {
      if (!selectable[static_cast<std::size_t>(j)]) continue;
      const double e = std::exp(logits[j] - max_u);
      ag(j, m) = e;
      total += e;
    }
    auto out = hp.segment(m * hd, hd);
    out.setZero();
    for (int j = 0; j < nodes; ++j) {
      if (!selectable[static_cast<std::size_t>(j)]) continue;
      ag(j, m) /= total;
      out.noalias() += ag(j, m) * vm.col(j);
    }
  }
  Vec hc = params.dec.glimpse.wo * hp;
  if (acts) {
    acts->qg = std::move(qg);
    acts->ag = std::move(ag);
    acts->hp = std::move(hp);
    acts->hc = hc;
  }
  return hc;
}

Vec glimpse(const Vec& hc_prime, const EmbeddingSet& emb, const std::vector<char>& selectable,
            const ModelParams& params, StepActivations* acts) {
  return glimpse_cached(hc_prime, make_key_cache(emb, params), selectable, params, acts);
}

Vec output_distribution_cached(const Vec& hc, const DecoderKeyCache& keys,
                               const std::vector<char>& selectable, const ModelParams& params,
                               StepActivations* acts) {
  const int nodes = static_cast<int>(keys.kout.cols());
  assert(static_cast<int>(selectable.size()) == nodes);
  Vec qout = params.dec.out_wq * hc;
  Vec tanh_s = Vec::Zero(nodes);
  Vec logits = Vec::Constant(nodes, kMaskedLogit);
  for (int j = 0; j < nodes; ++j) {
    if (!selectable[static_cast<std::size_t>(j)]) continue;
    tanh_s[j] = std::tanh(qout.dot(keys.kout.col(j)));
    logits[j] = params.cfg.clip * tanh_s[j];
  }
  Vec probs;
  masked_softmax(logits, selectable, probs);
  if (acts) {
    acts->qout = std::move(qout);
    acts->tanh_s = std::move(tanh_s);
    acts->probs = probs;
  }
  return probs;
}

Vec output_distribution(const Vec& hc, const EmbeddingSet& emb,
                        const std::vector<char>& selectable, const ModelParams& params,
                        StepActivations* acts) {
  return output_distribution_cached(hc, make_key_cache(emb, params), selectable, params, acts);
}

DecodeState apply_move(const VrpInstance& inst, const DecodeState& st, int chosen) {
  const std::vector<char> mask = feasibility_mask(inst, st);
  if (chosen < 0 || chosen >= inst.node_count() || !mask[static_cast<std::size_t>(chosen)])
    throw std::logic_error("apply_move: node " + std::to_string(chosen) +
                           " is not selectable at step " + std::to_string(st.step));
  DecodeState next = st;
  next.partial.push_back(chosen);
  next.step = st.step + 1;
  next.last = chosen;
  if (chosen == 0) {
    next.remaining = inst.capacity;
  } else {
    next.remaining = st.remaining - inst.nodes[static_cast<std::size_t>(chosen)].demand;
    next.visited[static_cast<std::size_t>(chosen)] = 1;
    next.visited_count = st.visited_count + 1;
  }
  return next;
}

}  // namespace amd
