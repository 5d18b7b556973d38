#pragma once

#include <cstdint>
#include <vector>

#include "tubuda/tensor.hpp"

/// Differentiable primitives. Shapes follow [batch, channels, height, width]
/// for image tensors and [rows, features] for matrices. Broadcasting is
/// limited to add_bias.
namespace tubuda::ops {

/// While alive, the piecewise ops on this thread (relu, abs, max pools,
/// safe_ratio and the clamps inside the losses) fold every branch choice
/// into a digest. Two forward passes with equal digests took the same
/// smooth piece of the function. Traces do not nest.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  void reset() { digest_ = kSeed; }

 private:
  static constexpr std::uint64_t kSeed = 0xcbf29ce484222325ULL;
  std::uint64_t digest_ = kSeed;
};

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// NaN inputs pass through unchanged.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

/// bias[c] added along axis 1 of x ([n, c] or [b, c, h, w]).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// shape manipulation
Tensor reshape(const Tensor& x, Shape shape);
/// Concatenation along `axis`; all other extents must match.
Tensor concat(const std::vector<Tensor>& xs, int axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, int begin, int end);
/// [b, m, n] -> [b, n, m].
Tensor transpose_last2(const Tensor& x);

// linear algebra
/// [b, m, k] x [b, k, n] -> [b, m, n].
Tensor bmm(const Tensor& a, const Tensor& b);
/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n, in] * w[out, in]^T -> [n, out]; bias is added separately.
Tensor linear(const Tensor& x, const Tensor& w);

// convolution family
/// Cross-correlation with zero padding. x[b, ci, h, w], k[co, ci, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& k, int stride = 1, int pad = 0);
/// Window maximum; gradient routes to the first maximal element in
/// row-major window order. A NaN anywhere in the window wins.
Tensor max_pool2d(const Tensor& x, int window, int stride);
/// [b, c, h, w] -> [b, c].
Tensor global_max_pool(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int factor);
/// [b, c*r*r, h, w] -> [b, c, h*r, w*r].
Tensor pixel_shuffle(const Tensor& x, int r);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Batch normalisation over axis 1. In training mode batch statistics are
/// used and the running buffers updated in place (unbiased variance);
/// otherwise the running buffers normalise.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

/// Gradient reversal: identity forward, upstream gradient times -lambda
/// backward.
Tensor grl(const Tensor& x, double lambda);

// row-wise helpers on [b, d] matrices
/// Per-row dot product -> [b, 1].
Tensor rowdot(const Tensor& a, const Tensor& b);
/// v[b, d] with each row multiplied by s[b, 1].
Tensor row_scale(const Tensor& v, const Tensor& s);
/// num / den elementwise where den >= min_den, 0 (with zero gradient)
/// elsewhere.
Tensor safe_ratio(const Tensor& num, const Tensor& den, double min_den);

// losses
/// Mean absolute error.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
/// Mean binary cross-entropy with pred clamped to [1e-7, 1 - 1e-7].
Tensor bce(const Tensor& pred, const Tensor& target);

}  // namespace tubuda::ops
