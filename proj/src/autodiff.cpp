#include "amd/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "amd/rng.hpp"

namespace amd {

Mat ff_sublayer_backward(const LayerActivations& la, const EncoderLayerParams& lp,
                         const Mat& g_out, FeedForward* ff_grads) {
  // out = tanh(hhat + ff(hhat)), hhat = tanh(h_in + mha)
  Mat g_pre = g_out.cwiseProduct((1.0 - la.out.array().square()).matrix());
  Mat g_hhat = g_pre;

  // ff = w1 * relu(w0*hhat + b0) + b1
  Mat g_r = lp.ff.w1.transpose() * g_pre;
  Mat g_z = g_r.cwiseProduct((la.relu.array() > 0.0).cast<double>().matrix());
  g_hhat.noalias() += lp.ff.w0.transpose() * g_z;
  if (ff_grads) {
    ff_grads->w1.noalias() += g_pre * la.relu.transpose();
    ff_grads->b1.noalias() += g_pre.rowwise().sum();
    ff_grads->w0.noalias() += g_z * la.hhat.transpose();
    ff_grads->b0.noalias() += g_z.rowwise().sum();
  }

  return g_hhat.cwiseProduct((1.0 - la.hhat.array().square()).matrix());
}

Mat mha_sublayer_backward(const LayerActivations& la, const EncoderLayerParams& lp,
                          const ModelConfig& cfg, const Mat& g_mha, AttentionWeights* attn_grads) {
  const int heads = cfg.heads;
  const int hd = cfg.head_dim();
  const int nodes = static_cast<int>(g_mha.cols());

  // mha = wo * head_out
  Mat g_head = lp.attn.wo.transpose() * g_mha;
  if (attn_grads) attn_grads->wo.noalias() += g_mha * la.head_out.transpose();

  Mat dq(heads * hd, nodes), dk(heads * hd, nodes), dv(heads * hd, nodes);
  for (int m = 0; m < heads; ++m) {
    const Mat& a = la.a[static_cast<std::size_t>(m)];
    auto g_head_m = g_head.middleRows(m * hd, hd);
    auto vm = la.v.middleRows(m * hd, hd);
    auto qm = la.q.middleRows(m * hd, hd);
    auto km = la.k.middleRows(m * hd, hd);

    // head_out_m column i = vm * a.row(i)^T
    Mat da = g_head_m.transpose() * vm;  // (nodes, nodes)
    dv.middleRows(m * hd, hd).noalias() = g_head_m * a;

    // masked softmax rows: masked weights are exactly 0, so they drop out
    Mat du(nodes, nodes);
    for (int i = 0; i < nodes; ++i) {
      const double row_dot = a.row(i).dot(da.row(i));
      du.row(i) = a.row(i).cwiseProduct((da.row(i).array() - row_dot).matrix());
    }

    dq.middleRows(m * hd, hd).noalias() = km * du.transpose();
    dk.middleRows(m * hd, hd).noalias() = qm * du;
  }

  if (attn_grads) {
    attn_grads->wq.noalias() += dq * la.input.transpose();
    attn_grads->wk.noalias() += dk * la.input.transpose();
    attn_grads->wv.noalias() += dv * la.input.transpose();
  }
  Mat g_in = lp.attn.wq.transpose() * dq;
  g_in.noalias() += lp.attn.wk.transpose() * dk;
  g_in.noalias() += lp.attn.wv.transpose() * dv;
  return g_in;
}

namespace {

/// Backward through one encode epoch given d(logprob)/d(final embeddings);
/// accumulates encoder parameter gradients and dH0.
void encoder_backward(const EpochRecord& ep, const ModelParams& params, Mat dh, GradientSet& g,
                      Mat& dh0) {
  const ModelConfig& cfg = params.cfg;
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerActivations& la = ep.enc.layers[static_cast<std::size_t>(l)];
    const EncoderLayerParams& lp = params.enc.layers[static_cast<std::size_t>(l)];
    EncoderLayerParams& lg = g.enc.layers[static_cast<std::size_t>(l)];

    const Mat g_skip = ff_sublayer_backward(la, lp, dh, &lg.ff);
    dh = g_skip;  // skip connection into the layer input
    dh.noalias() += mha_sublayer_backward(la, lp, cfg, g_skip, &lg.attn);
  }
  dh0 += dh;
}

void init_embed_backward(const VrpInstance& inst, const Mat& dh0, GradientSet& g) {
  Eigen::Vector3d x;
  for (int i = 0; i < inst.node_count(); ++i) {
    const Node& node = inst.nodes[static_cast<std::size_t>(i)];
    if (i == 0) {
      x << node.x, node.y, 0.0;
      g.enc.w_depot.noalias() += dh0.col(i) * x.transpose();
      g.enc.b_depot.noalias() += dh0.col(i);
    } else {
      x << node.x, node.y, static_cast<double>(node.demand) / inst.capacity;
      g.enc.w_cust.noalias() += dh0.col(i) * x.transpose();
      g.enc.b_cust.noalias() += dh0.col(i);
    }
  }
}

}  // namespace

std::pair<double, GradientSet> logprob_grad(const VrpInstance& inst, const ModelParams& params,
                                            const Solution& sol, ReencodePolicy reencode) {
  RolloutTape tape;
  const double logprob = replay(inst, params, sol.visits, reencode, &tape);
  return {logprob, backward_from_tape(inst, params, tape)};
}

GradientSet backward_from_tape(const VrpInstance& inst, const ModelParams& params,
                               const RolloutTape& tape) {
  const ModelConfig& cfg = params.cfg;
  const int heads = cfg.heads;
  const int hd = cfg.head_dim();
  const int dim = cfg.dim;
  const int nodes = inst.node_count();
  GradientSet g = ModelParams::zeros(cfg);

  const std::size_t n_epochs = tape.epochs.size();
  std::vector<Mat> dh(n_epochs, Mat::Zero(dim, nodes));
  std::vector<Mat> dkg(n_epochs, Mat::Zero(heads * hd, nodes));
  std::vector<Mat> dvg(n_epochs, Mat::Zero(heads * hd, nodes));
  std::vector<Mat> dkout(n_epochs, Mat::Zero(hd, nodes));

  for (auto it = tape.steps.rbegin(); it != tape.steps.rend(); ++it) {
    const StepRecord& s = *it;
    const EpochRecord& ep = tape.epochs[static_cast<std::size_t>(s.epoch)];
    const auto e = static_cast<std::size_t>(s.epoch);

    // d(log p[chosen]) / d(output logits) = onehot(chosen) - probs
    // (masked logits are constants: their probability is exactly 0)
    Vec g_s = Vec::Zero(nodes);
    for (int j = 0; j < nodes; ++j) {
      if (!s.mask[static_cast<std::size_t>(j)]) continue;
      const double g_u = ((j == s.chosen) ? 1.0 : 0.0) - s.acts.probs[j];
      g_s[j] = g_u * cfg.clip * (1.0 - s.acts.tanh_s[j] * s.acts.tanh_s[j]);
    }

    // output head: u_j = clip * tanh(qout . kout_j)
    Vec g_qout = Vec::Zero(hd);
    for (int j = 0; j < nodes; ++j) {
      if (g_s[j] == 0.0) continue;
      g_qout.noalias() += g_s[j] * ep.keys.kout.col(j);
      dkout[e].col(j).noalias() += g_s[j] * s.acts.qout;
    }
    g.dec.out_wq.noalias() += g_qout * s.acts.hc.transpose();
    Vec g_hc = params.dec.out_wq.transpose() * g_qout;

    // glimpse: hc = wo * hp
    Vec g_hp = params.dec.glimpse.wo.transpose() * g_hc;
    g.dec.glimpse.wo.noalias() += g_hc * s.acts.hp.transpose();

    Vec g_qg = Vec::Zero(heads * hd);
    for (int m = 0; m < heads; ++m) {
      auto g_hp_m = g_hp.segment(m * hd, hd);
      auto qg_m = s.acts.qg.segment(m * hd, hd);
      auto kg_m = ep.keys.kg.middleRows(m * hd, hd);
      auto vg_m = ep.keys.vg.middleRows(m * hd, hd);

      double a_dot = 0.0;
      Vec g_a = Vec::Zero(nodes);
      for (int j = 0; j < nodes; ++j) {
        if (!s.mask[static_cast<std::size_t>(j)]) continue;
        g_a[j] = g_hp_m.dot(vg_m.col(j));
        dvg[e].col(j).segment(m * hd, hd).noalias() += s.acts.ag(j, m) * g_hp_m;
        a_dot += s.acts.ag(j, m) * g_a[j];
      }
      for (int j = 0; j < nodes; ++j) {
        if (!s.mask[static_cast<std::size_t>(j)]) continue;
        const double g_u = s.acts.ag(j, m) * (g_a[j] - a_dot);
        g_qg.segment(m * hd, hd).noalias() += g_u * kg_m.col(j);
        dkg[e].col(j).segment(m * hd, hd).noalias() += g_u * qg_m;
      }
    }
    g.dec.glimpse.wq.noalias() += g_qg * s.hc_prime.transpose();
    Vec g_ctx = params.dec.glimpse.wq.transpose() * g_qg;

    // context = [mean(unvisited incl. depot); h_last; remaining/capacity]
    const double inv_count = 1.0 / static_cast<double>(s.mean_nodes.size());
    for (int i : s.mean_nodes) dh[e].col(i).noalias() += inv_count * g_ctx.head(dim);
    dh[e].col(s.last).noalias() += g_ctx.segment(dim, dim);
  }

  Mat dh0 = Mat::Zero(dim, nodes);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const EpochRecord& ep = tape.epochs[e];
    g.dec.out_wk.noalias() += dkout[e] * ep.emb.h.transpose();
    dh[e].noalias() += params.dec.out_wk.transpose() * dkout[e];
    g.dec.glimpse.wk.noalias() += dkg[e] * ep.emb.h.transpose();
    dh[e].noalias() += params.dec.glimpse.wk.transpose() * dkg[e];
    g.dec.glimpse.wv.noalias() += dvg[e] * ep.emb.h.transpose();
    dh[e].noalias() += params.dec.glimpse.wv.transpose() * dvg[e];
    encoder_backward(ep, params, std::move(dh[e]), g, dh0);
  }
  init_embed_backward(inst, dh0, g);

  return g;
}

FiniteDiffReport finite_diff_check(const VrpInstance& inst, const ModelParams& params,
                                   const Solution& sol, ReencodePolicy reencode,
                                   const FiniteDiffOptions& options) {
  auto [logprob, grads] = logprob_grad(inst, params, sol, reencode);
  (void)logprob;
  Vec flat = flatten(grads);
  long corrupt_at = -1;
  if (options.corrupt_largest && flat.size() > 0) {
    Eigen::Index at = 0;
    flat.cwiseAbs().maxCoeff(&at);
    corrupt_at = static_cast<long>(at);
    flat[at] *= 2.0;
  }

  // flat-coordinate lookup table over the mutable working copy
  ModelParams work = params;
  struct Span {
    std::string path;
    double* data;
    long begin, end;
  };
  std::vector<Span> spans;
  long total = 0;
  visit_tensors(work, [&](const TensorView& v) {
    spans.push_back({v.path, v.data, total, total + static_cast<long>(v.size())});
    total += static_cast<long>(v.size());
  });

  Rng rng = make_stream(options.seed, Stream::CoordinateSample);
  FiniteDiffReport report;
  report.coordinates = options.coordinates + (corrupt_at >= 0 ? 1 : 0);
  for (int c = 0; c < report.coordinates; ++c) {
    const long k = (corrupt_at >= 0 && c == 0) ? corrupt_at
                                               : rng.next_int(0, static_cast<int>(total - 1));
    const Span* span = nullptr;
    for (const auto& sp : spans)
      if (k >= sp.begin && k < sp.end) {
        span = &sp;
        break;
      }
    assert(span);
    double* entry = span->data + (k - span->begin);
    const double original = *entry;
    *entry = original + options.step;
    const double up = logprob_of(inst, work, sol, reencode);
    *entry = original - options.step;
    const double down = logprob_of(inst, work, sol, reencode);
    *entry = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double analytic = flat[k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_path = span->path;
      report.worst_index = k;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  report.pass = report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace amd
