#include <doctest.h>

#include <cmath>

#include "amd/autodiff.hpp"
#include "amd/encoder.hpp"
#include "amd/rng.hpp"

using namespace amd;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.dim = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  return cfg;
}

struct GradFixture {
  VrpInstance inst;
  ModelParams params;
  Solution sol;
  int reencodes = 0;

  // capacity 10 against ~30 total demand forces several depot returns
  explicit GradFixture(std::uint64_t seed, int n = 6, int capacity = 10)
      : inst(generate_instance(n, capacity, seed)), params(ModelParams::init(tiny_config(), seed)) {
    RolloutOptions opts;
    opts.mode = SelectMode::Sample;
    opts.seed = derive_seed(seed, Stream::Sampling);
    const RolloutResult r = construct(inst, params, opts);
    sol = r.solution;
    reencodes = r.reencode_count;
  }
};

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
  const GradFixture f(41);
  REQUIRE(f.reencodes >= 1);  // exercise paths through re-encodes

  FiniteDiffOptions opts;
  opts.coordinates = 150;
  opts.seed = 42;
  const FiniteDiffReport report =
      finite_diff_check(f.inst, f.params, f.sol, ReencodePolicy::OnDepotReturn, opts);
  INFO("worst ", report.worst_path, "[", report.worst_index, "] analytic ", report.worst_analytic,
       " numeric ", report.worst_numeric);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("gradients also check out without re-encoding") {
  const GradFixture f(43);
  FiniteDiffOptions opts;
  opts.coordinates = 120;
  opts.seed = 44;
  const FiniteDiffReport report =
      finite_diff_check(f.inst, f.params, f.sol, ReencodePolicy::Never, opts);
  CHECK(report.pass);
}

TEST_CASE("bias-only model: analytic equals numeric tightly") {
  const VrpInstance inst = generate_instance(5, 12, 45);
  ModelParams params = ModelParams::zeros(tiny_config());
  Rng rng(46);
  params.enc.b_cust = Vec::NullaryExpr(16, [&](Eigen::Index) { return rng.next_range(-0.5, 0.5); });
  params.enc.b_depot = Vec::NullaryExpr(16, [&](Eigen::Index) { return rng.next_range(-0.5, 0.5); });
  for (auto& layer : params.enc.layers) {
    layer.ff.b0 = Vec::NullaryExpr(64, [&](Eigen::Index) { return rng.next_range(-0.5, 0.5); });
    layer.ff.b1 = Vec::NullaryExpr(16, [&](Eigen::Index) { return rng.next_range(-0.5, 0.5); });
  }
  RolloutOptions opts;
  opts.mode = SelectMode::Sample;
  opts.seed = 47;
  const Solution sol = construct(inst, params, opts).solution;

  FiniteDiffOptions fd;
  fd.coordinates = 120;
  fd.seed = 48;
  fd.tolerance = 1e-6;
  const FiniteDiffReport report =
      finite_diff_check(inst, params, sol, ReencodePolicy::OnDepotReturn, fd);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("corrupting one gradient entry makes the check fail") {
  const GradFixture f(49);
  FiniteDiffOptions opts;
  opts.coordinates = 60;
  opts.seed = 50;
  opts.corrupt_largest = true;
  const FiniteDiffReport report =
      finite_diff_check(f.inst, f.params, f.sol, ReencodePolicy::OnDepotReturn, opts);
  CHECK(!report.pass);
}

TEST_CASE("logprob_grad is deterministic and consistent with logprob_of") {
  const GradFixture f(51);
  const auto [lp1, g1] = logprob_grad(f.inst, f.params, f.sol, ReencodePolicy::OnDepotReturn);
  const auto [lp2, g2] = logprob_grad(f.inst, f.params, f.sol, ReencodePolicy::OnDepotReturn);
  CHECK(lp1 == lp2);
  CHECK(flatten(g1) == flatten(g2));
  CHECK(lp1 == doctest::Approx(logprob_of(f.inst, f.params, f.sol,
                                          ReencodePolicy::OnDepotReturn)).epsilon(1e-12));
}

TEST_CASE("zeroing a head's output projection zeroes its q/k/v gradients") {
  const GradFixture f(52);
  ModelParams params = f.params;
  const int hd = params.cfg.head_dim();
  const int layer = 1, head = 1;
  params.enc.layers[layer].attn.wo.middleCols(head * hd, hd).setZero();

  // re-sample a solution under the modified params so the trajectory is reachable
  RolloutOptions opts;
  opts.mode = SelectMode::Sample;
  opts.seed = 53;
  const Solution sol = construct(f.inst, params, opts).solution;

  const auto [lp, g] = logprob_grad(f.inst, params, sol, ReencodePolicy::OnDepotReturn);
  (void)lp;
  const auto& lg = g.enc.layers[layer].attn;
  CHECK(lg.wq.middleRows(head * hd, hd).norm() == 0.0);
  CHECK(lg.wk.middleRows(head * hd, hd).norm() == 0.0);
  CHECK(lg.wv.middleRows(head * hd, hd).norm() == 0.0);
  // the other head still learns
  CHECK(lg.wq.middleRows(0, hd).norm() > 0.0);
}

TEST_CASE("ff sublayer vjp matches finite differences") {
  const ModelConfig cfg = tiny_config();
  Rng rng(54);
  const ModelParams p = ModelParams::init(cfg, 54);
  const int nodes = 4;
  Mat h_in(cfg.dim, nodes), mha(cfg.dim, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int r = 0; r < cfg.dim; ++r) {
      h_in(r, i) = rng.next_range(-1.0, 1.0);
      mha(r, i) = rng.next_range(-1.0, 1.0);
    }
  LayerActivations la;
  ff_sublayer(h_in, mha, p.enc.layers[0], la);
  Mat g_out(cfg.dim, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int r = 0; r < cfg.dim; ++r) g_out(r, i) = rng.next_range(-1.0, 1.0);
  const Mat g_in = ff_sublayer_backward(la, p.enc.layers[0], g_out, nullptr);

  const double h = 1e-5;
  for (int probe = 0; probe < 40; ++probe) {
    const int r = rng.next_int(0, cfg.dim - 1);
    const int i = rng.next_int(0, nodes - 1);
    Mat up = h_in, down = h_in;
    up(r, i) += h;
    down(r, i) -= h;
    LayerActivations lau, lad;
    ff_sublayer(up, mha, p.enc.layers[0], lau);
    ff_sublayer(down, mha, p.enc.layers[0], lad);
    const double numeric =
        (g_out.cwiseProduct(lau.out).sum() - g_out.cwiseProduct(lad.out).sum()) / (2 * h);
    const double analytic = g_in(r, i);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
  }
}

TEST_CASE("mha sublayer vjp matches finite differences") {
  const ModelConfig cfg = tiny_config();
  Rng rng(55);
  const ModelParams p = ModelParams::init(cfg, 55);
  const int nodes = 5;
  std::vector<char> visited(nodes, 0);
  visited[3] = 1;
  Mat h_in(cfg.dim, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int r = 0; r < cfg.dim; ++r) h_in(r, i) = rng.next_range(-1.0, 1.0);
  LayerActivations la;
  mha_sublayer(h_in, visited, p.enc.layers[0], cfg, false, la);
  Mat g_out(cfg.dim, nodes);
  for (int i = 0; i < nodes; ++i)
    for (int r = 0; r < cfg.dim; ++r) g_out(r, i) = rng.next_range(-1.0, 1.0);
  const Mat g_in = mha_sublayer_backward(la, p.enc.layers[0], cfg, g_out, nullptr);

  const double h = 1e-5;
  for (int probe = 0; probe < 40; ++probe) {
    const int r = rng.next_int(0, cfg.dim - 1);
    const int i = rng.next_int(0, nodes - 1);
    Mat up = h_in, down = h_in;
    up(r, i) += h;
    down(r, i) -= h;
    LayerActivations lau, lad;
    mha_sublayer(up, visited, p.enc.layers[0], cfg, false, lau);
    mha_sublayer(down, visited, p.enc.layers[0], cfg, false, lad);
    const double numeric =
        (g_out.cwiseProduct(lau.mha).sum() - g_out.cwiseProduct(lad.mha).sum()) / (2 * h);
    const double analytic = g_in(r, i);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
  }
}

TEST_CASE("gradients are finite and not identically zero") {
  const GradFixture f(56);
  const auto [lp, g] = logprob_grad(f.inst, f.params, f.sol, ReencodePolicy::OnDepotReturn);
  (void)lp;
  const Vec flat = flatten(g);
  CHECK(flat.allFinite());
  CHECK(flat.norm() > 0.0);
}
