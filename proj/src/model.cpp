#include "amd/model.hpp"

#include <cmath>
#include <stdexcept>

#include "amd/rng.hpp"

namespace amd {

void ModelConfig::validate() const {
  if (dim <= 0 || layers <= 0 || heads <= 0)
    throw std::invalid_argument("model config: dim, layers, heads must be positive");
  if (dim % heads != 0) throw std::invalid_argument("model config: dim must be divisible by heads");
  if (clip <= 0.0) throw std::invalid_argument("model config: clip must be positive");
}

namespace {

struct TensorDecl {
  std::string path;
  Mat* mat = nullptr;
  Vec* vec = nullptr;
  int fan_in = 0;
};

// Central registry: declaration order fixes path order, flatten order and
// init draw order.
template <typename P>
void collect(P& p, std::vector<TensorDecl>& out) {
  out.push_back({"encoder.init.w_cust", &p.enc.w_cust, nullptr, 3});
  out.push_back({"encoder.init.b_cust", nullptr, &p.enc.b_cust, 3});
  out.push_back({"encoder.init.w_depot", &p.enc.w_depot, nullptr, 3});
  out.push_back({"encoder.init.b_depot", nullptr, &p.enc.b_depot, 3});
  const int dim = p.cfg.dim;
  const int ff = p.cfg.ff_dim();
  for (std::size_t l = 0; l < p.enc.layers.size(); ++l) {
    auto& layer = p.enc.layers[l];
    const std::string base = "encoder.layer" + std::to_string(l);
    out.push_back({base + ".attn.wq", &layer.attn.wq, nullptr, dim});
    out.push_back({base + ".attn.wk", &layer.attn.wk, nullptr, dim});
    out.push_back({base + ".attn.wv", &layer.attn.wv, nullptr, dim});
    out.push_back({base + ".attn.wo", &layer.attn.wo, nullptr, dim});
    out.push_back({base + ".ff.w0", &layer.ff.w0, nullptr, dim});
    out.push_back({base + ".ff.b0", nullptr, &layer.ff.b0, dim});
    out.push_back({base + ".ff.w1", &layer.ff.w1, nullptr, ff});
    out.push_back({base + ".ff.b1", nullptr, &layer.ff.b1, ff});
  }
  out.push_back({"decoder.glimpse.wq", &p.dec.glimpse.wq, nullptr, p.cfg.context_dim()});
  out.push_back({"decoder.glimpse.wk", &p.dec.glimpse.wk, nullptr, dim});
  out.push_back({"decoder.glimpse.wv", &p.dec.glimpse.wv, nullptr, dim});
  out.push_back({"decoder.glimpse.wo", &p.dec.glimpse.wo, nullptr, dim});
  out.push_back({"decoder.out.wq", &p.dec.out_wq, nullptr, dim});
  out.push_back({"decoder.out.wk", &p.dec.out_wk, nullptr, dim});
}

void shape_params(ModelParams& p) {
  const ModelConfig& c = p.cfg;
  c.validate();
  const int dim = c.dim;
  const int hd = c.head_dim();
  const int proj = c.heads * hd;  // == dim
  const int ff = c.ff_dim();
  p.enc.w_cust = Mat::Zero(dim, 3);
  p.enc.b_cust = Vec::Zero(dim);
  p.enc.w_depot = Mat::Zero(dim, 3);
  p.enc.b_depot = Vec::Zero(dim);
  p.enc.layers.assign(static_cast<std::size_t>(c.layers), {});
  for (auto& layer : p.enc.layers) {
    layer.attn.wq = Mat::Zero(proj, dim);
    layer.attn.wk = Mat::Zero(proj, dim);
    layer.attn.wv = Mat::Zero(proj, dim);
    layer.attn.wo = Mat::Zero(dim, proj);
    layer.ff.w0 = Mat::Zero(ff, dim);
    layer.ff.b0 = Vec::Zero(ff);
    layer.ff.w1 = Mat::Zero(dim, ff);
    layer.ff.b1 = Vec::Zero(dim);
  }
  p.dec.glimpse.wq = Mat::Zero(proj, c.context_dim());
  p.dec.glimpse.wk = Mat::Zero(proj, dim);
  p.dec.glimpse.wv = Mat::Zero(proj, dim);
  p.dec.glimpse.wo = Mat::Zero(dim, proj);
  p.dec.out_wq = Mat::Zero(hd, dim);
  p.dec.out_wk = Mat::Zero(hd, dim);
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  ModelParams p;
  p.cfg = cfg;
  shape_params(p);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng rng = make_stream(seed, Stream::ParamInit);
  std::vector<TensorDecl> decls;
  collect(p, decls);
  for (const auto& d : decls) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.fan_in));
    double* data = d.mat ? d.mat->data() : d.vec->data();
    const Eigen::Index n = d.mat ? d.mat->size() : d.vec->size();
    for (Eigen::Index i = 0; i < n; ++i) data[i] = rng.next_range(-bound, bound);
  }
  return p;
}

Eigen::Index ModelParams::parameter_count() const {
  Eigen::Index total = 0;
  visit_tensors(*this, [&](const std::string&, const double*, Eigen::Index r, Eigen::Index c, int) {
    total += r * c;
  });
  return total;
}

void visit_tensors(ModelParams& p, const std::function<void(const TensorView&)>& fn) {
  std::vector<TensorDecl> decls;
  collect(p, decls);
  for (const auto& d : decls) {
    TensorView v;
    v.path = d.path;
    if (d.mat) {
      v.data = d.mat->data();
      v.rows = d.mat->rows();
      v.cols = d.mat->cols();
      v.rank = 2;
    } else {
      v.data = d.vec->data();
      v.rows = d.vec->size();
      v.cols = 1;
      v.rank = 1;
    }
    fn(v);
  }
}

void visit_tensors(const ModelParams& p,
                   const std::function<void(const std::string&, const double*, Eigen::Index,
                                            Eigen::Index, int)>& fn) {
  std::vector<TensorDecl> decls;
  collect(const_cast<ModelParams&>(p), decls);
  for (const auto& d : decls) {
    if (d.mat)
      fn(d.path, d.mat->data(), d.mat->rows(), d.mat->cols(), 2);
    else
      fn(d.path, d.vec->data(), d.vec->size(), 1, 1);
  }
}

Vec flatten(const ModelParams& p) {
  Vec out(p.parameter_count());
  Eigen::Index at = 0;
  visit_tensors(p, [&](const std::string&, const double* data, Eigen::Index r, Eigen::Index c, int) {
    const Eigen::Index n = r * c;
    std::copy(data, data + n, out.data() + at);
    at += n;
  });
  return out;
}

void unflatten(const Vec& flat, ModelParams& p) {
  if (flat.size() != p.parameter_count())
    throw std::invalid_argument("unflatten: size mismatch");
  Eigen::Index at = 0;
  visit_tensors(p, [&](const TensorView& v) {
    std::copy(flat.data() + at, flat.data() + at + v.size(), v.data);
    at += v.size();
  });
}

void axpy(ModelParams& p, const ModelParams& q, double s) {
  std::vector<TensorDecl> a, b;
  collect(p, a);
  collect(const_cast<ModelParams&>(q), b);
  if (a.size() != b.size()) throw std::invalid_argument("axpy: structure mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].mat) {
      if (a[i].mat->rows() != b[i].mat->rows() || a[i].mat->cols() != b[i].mat->cols())
        throw std::invalid_argument("axpy: shape mismatch at " + a[i].path);
      a[i].mat->noalias() += s * (*b[i].mat);
    } else {
      if (a[i].vec->size() != b[i].vec->size())
        throw std::invalid_argument("axpy: shape mismatch at " + a[i].path);
      a[i].vec->noalias() += s * (*b[i].vec);
    }
  }
}

void scale(ModelParams& p, double factor) {
  visit_tensors(p, [&](const TensorView& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data[i] *= factor;
  });
}

void set_zero(ModelParams& p) {
  visit_tensors(p, [&](const TensorView& v) { std::fill(v.data, v.data + v.size(), 0.0); });
}

}  // namespace amd
