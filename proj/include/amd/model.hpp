#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace amd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Architecture hyperparameters. head_dim (d_k = d_v) and ff_dim (d_F = 4*d_h)
/// are derived; dim must be divisible by heads.
struct ModelConfig {
  int dim = 128;      // node embedding width d_h
  int layers = 3;     // encoder attention layers N
  int heads = 8;      // attention heads M
  double clip = 10.0; // output-logit clip constant C

  int head_dim() const { return dim / heads; }
  int ff_dim() const { return 4 * dim; }
  int context_dim() const { return 2 * dim + 1; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-layer attention projections with the head blocks stacked:
/// row block [m*head_dim, (m+1)*head_dim) of wq/wk/wv is head m's projection,
/// column block of wo is head m's output map.
struct AttentionWeights {
  Mat wq;  // (heads*head_dim, in_dim)
  Mat wk;  // (heads*head_dim, dim)
  Mat wv;  // (heads*head_dim, dim)
  Mat wo;  // (dim, heads*head_dim)
};

struct FeedForward {
  Mat w0;  // (ff_dim, dim)
  Vec b0;  // (ff_dim)
  Mat w1;  // (dim, ff_dim)
  Vec b1;  // (dim)
};

struct EncoderLayerParams {
  AttentionWeights attn;
  FeedForward ff;
};

struct EncoderParams {
  Mat w_cust;   // (dim, 3): input features (x, y, demand/capacity)
  Vec b_cust;   // (dim)
  Mat w_depot;  // (dim, 3): depot uses its own affine map, feature (x, y, 0)
  Vec b_depot;  // (dim)
  std::vector<EncoderLayerParams> layers;
};

struct DecoderParams {
  AttentionWeights glimpse;  // wq maps the (2*dim+1) context, wk/wv map embeddings
  Mat out_wq;                // (head_dim, dim)
  Mat out_wk;                // (head_dim, dim)
};

/// A flat, order-stable view over one tensor of the model.
struct TensorView {
  std::string path;
  double* data = nullptr;  // column-major, rows*cols entries
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int rank = 2;  // 1 for bias vectors
  Eigen::Index size() const { return rows * cols; }
};

/// All learnable weights plus the architecture that shapes them. Also used
/// for shape-congruent value sets (gradients, Adam moments).
struct ModelParams {
  ModelConfig cfg;
  EncoderParams enc;
  DecoderParams dec;

  /// Zero-valued parameter set of the given architecture.
  static ModelParams zeros(const ModelConfig& cfg);
  /// Seeded init: each tensor uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
  /// using their matrix's fan_in. Values drawn in registry order, column-major
  /// within each tensor.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

  Eigen::Index parameter_count() const;
};

/// Visits every tensor in a fixed order with a stable unique path
/// (encoder.init.*, encoder.layer<l>.attn.*, encoder.layer<l>.ff.*,
/// decoder.glimpse.*, decoder.out.*).
void visit_tensors(ModelParams& p, const std::function<void(const TensorView&)>& fn);
void visit_tensors(const ModelParams& p,
                   const std::function<void(const std::string&, const double*, Eigen::Index,
                                            Eigen::Index, int)>& fn);

/// Parameter vector in registry order. flatten(unflatten(v)) == v exactly.
Vec flatten(const ModelParams& p);
void unflatten(const Vec& flat, ModelParams& p);

/// Gradients of a scalar (the rollout log-probability) with respect to every
/// parameter; shape- and path-congruent with ModelParams.
using GradientSet = ModelParams;

/// In-place p += scale * q over all tensors (shapes must match).
void axpy(ModelParams& p, const ModelParams& q, double scale);
void scale(ModelParams& p, double factor);
void set_zero(ModelParams& p);

}  // namespace amd
