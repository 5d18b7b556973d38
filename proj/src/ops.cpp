#include "tubuda/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tubuda/error.hpp"
#include "tubuda/parallel.hpp"

namespace tubuda::ops {

namespace {

thread_local std::uint64_t* g_branch = nullptr;

inline void branch(std::uint64_t choice) {
  *g_branch = (*g_branch ^ choice) * 0x100000001b3ULL;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& x, int rank, const char* op) {
  require(x.ndim() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                " input, got " + shape_str(x.shape()));
}

// Gradient buffer of parent i, or nullptr when it does not need one.
double* parent_grad(TensorImpl& self, std::size_t i) {
  TensorImpl& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}

const double* parent_data(TensorImpl& self, std::size_t i) { return self.parents[i]->data.data(); }

template <class F>
Tensor unary(const Tensor& x, F f) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::from(x.shape(), std::move(out));
}

}  // namespace

BranchTrace::BranchTrace() {
  if (g_branch) throw InvalidArgument("BranchTrace: traces do not nest");
  g_branch = &digest_;
}

BranchTrace::~BranchTrace() { g_branch = nullptr; }

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    const auto& g = self.grad;
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* d = parent_grad(self, k)) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    const auto& g = self.grad;
    if (double* d = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (double* d = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    const auto& g = self.grad;
    const double* av = parent_data(self, 0);
    const double* bv = parent_data(self, 1);
    if (double* d = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (double* d = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Tensor r = unary(a, [s](double v) { return v * s; });
  return make_result(a.shape(), std::move(r.impl()->data), {a}, [s](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor r = unary(a, [s](double v) { return v + s; });
  return make_result(a.shape(), std::move(r.impl()->data), {a}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  // NaN passes through so non-finite values keep surfacing downstream.
  Tensor r = unary(x, [](double v) { return v > 0.0 || std::isnan(v) ? v : 0.0; });
  if (g_branch) {
    for (double v : x.data()) branch(v > 0.0);
  }
  return make_result(x.shape(), std::move(r.impl()->data), {x}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    const double* in = parent_data(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in[i] > 0.0) d[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor r = unary(x, [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return make_result(x.shape(), std::move(r.impl()->data), {x}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      d[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor abs(const Tensor& x) {
  Tensor r = unary(x, [](double v) { return std::abs(v); });
  if (g_branch) {
    for (double v : x.data()) branch(v > 0.0 ? 1 : (v < 0.0 ? 2 : 0));
  }
  return make_result(x.shape(), std::move(r.impl()->data), {x}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    const double* in = parent_data(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      d[i] += in[i] > 0.0 ? self.grad[i] : (in[i] < 0.0 ? -self.grad[i] : 0.0);
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require(x.ndim() >= 2, "add_bias: input must have rank >= 2, got " + shape_str(x.shape()));
  require_rank(bias, 1, "add_bias");
  const int n = x.dim(0);
  const int c = x.dim(1);
  require(bias.dim(0) == c, "add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                                shape_str(x.shape()));
  const std::size_t inner = x.numel() / (static_cast<std::size_t>(n) * c);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double* o = out.data() + (static_cast<std::size_t>(b) * c + ch) * inner;
      const double v = bias.data()[ch];
      for (std::size_t i = 0; i < inner; ++i) o[i] += v;
    }
  }
  return make_result(x.shape(), std::move(out), {x, bias}, [n, c, inner](TensorImpl& self) {
    const auto& g = self.grad;
    if (double* d = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (double* d = parent_grad(self, 1)) {
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          const double* gi = g.data() + (static_cast<std::size_t>(b) * c + ch) * inner;
          double acc = 0.0;
          for (std::size_t i = 0; i < inner; ++i) acc += gi[i];
          d[ch] += acc;
        }
      }
    }
  });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1}, {acc}, {x}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean of empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_result({1}, {acc * inv}, {x}, [inv](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    const double g = self.grad[0] * inv;
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) d[i] += g;
  });
}

// --- shape manipulation -----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes size");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner) sizes.
struct AxisSplit {
  std::size_t outer = 1;
  int extent = 0;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit a;
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[i]);
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= static_cast<std::size_t>(s[i]);
  return a;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat of zero tensors");
  const Shape& first = xs[0].shape();
  require(axis >= 0 && axis < static_cast<int>(first.size()), "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    Shape a = t.shape();
    Shape b = first;
    require(a.size() == b.size(), "concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    a[axis] = b[axis] = 0;
    require(a == b, "concat: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(first));
    out_shape[axis] += t.dim(axis);
  }
  const AxisSplit out_split = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& t : xs) {
    offsets.push_back(offset);
    const std::size_t block = static_cast<std::size_t>(t.dim(axis)) * out_split.inner;
    for (std::size_t o = 0; o < out_split.outer; ++o) {
      std::copy_n(t.data().begin() + o * block, block,
                  out.begin() + o * out_split.extent * out_split.inner + offset);
    }
    offset += block;
  }
  std::vector<std::size_t> blocks;
  for (const auto& t : xs) blocks.push_back(static_cast<std::size_t>(t.dim(axis)) * out_split.inner);
  const std::size_t row = static_cast<std::size_t>(out_split.extent) * out_split.inner;
  return make_result(out_shape, std::move(out), xs,
                     [offsets, blocks, row, outer = out_split.outer](TensorImpl& self) {
                       for (std::size_t k = 0; k < blocks.size(); ++k) {
                         double* d = parent_grad(self, k);
                         if (!d) continue;
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* g = self.grad.data() + o * row + offsets[k];
                           double* dst = d + o * blocks[k];
                           for (std::size_t i = 0; i < blocks[k]; ++i) dst[i] += g[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, int begin, int end) {
  require(axis >= 0 && axis < x.ndim(), "slice: axis out of range");
  require(0 <= begin && begin <= end && end <= x.dim(axis),
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") invalid for " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t block = static_cast<std::size_t>(end - begin) * s.inner;
  const std::size_t row = static_cast<std::size_t>(s.extent) * s.inner;
  const std::size_t start = static_cast<std::size_t>(begin) * s.inner;
  std::vector<double> out(s.outer * block);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data().begin() + o * row + start, block, out.begin() + o * block);
  }
  return make_result(out_shape, std::move(out), {x},
                     [outer = s.outer, block, row, start](TensorImpl& self) {
                       double* d = parent_grad(self, 0);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < block; ++i) {
                           d[o * row + start + i] += self.grad[o * block + i];
                         }
                       }
                     });
}

Tensor transpose_last2(const Tensor& x) {
  require_rank(x, 3, "transpose_last2");
  const int b = x.dim(0), m = x.dim(1), n = x.dim(2);
  std::vector<double> out(x.numel());
  for (int k = 0; k < b; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * m * n;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) out[base + static_cast<std::size_t>(j) * m + i] = x.data()[base + static_cast<std::size_t>(i) * n + j];
    }
  }
  return make_result({b, n, m}, std::move(out), {x}, [b, m, n](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (int k = 0; k < b; ++k) {
      const std::size_t base = static_cast<std::size_t>(k) * m * n;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) d[base + static_cast<std::size_t>(i) * n + j] += self.grad[base + static_cast<std::size_t>(j) * m + i];
      }
    }
  });
}

// --- linear algebra ---------------------------------------------------------

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const int nb = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  require(b.dim(0) == nb && b.dim(1) == k,
          "bmm: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(nb) * m * n);
  for (int i = 0; i < nb; ++i) {
    CMapMat A(a.data().data() + static_cast<std::size_t>(i) * m * k, m, k);
    CMapMat B(b.data().data() + static_cast<std::size_t>(i) * k * n, k, n);
    MapMat C(out.data() + static_cast<std::size_t>(i) * m * n, m, n);
    C.noalias() = A * B;
  }
  return make_result({nb, m, n}, std::move(out), {a, b}, [nb, m, k, n](TensorImpl& self) {
    const double* av = parent_data(self, 0);
    const double* bv = parent_data(self, 1);
    double* da = parent_grad(self, 0);
    double* db = parent_grad(self, 1);
    for (int i = 0; i < nb; ++i) {
      CMapMat G(self.grad.data() + static_cast<std::size_t>(i) * m * n, m, n);
      if (da) {
        MapMat DA(da + static_cast<std::size_t>(i) * m * k, m, k);
        DA.noalias() += G * CMapMat(bv + static_cast<std::size_t>(i) * k * n, k, n).transpose();
      }
      if (db) {
        MapMat DB(db + static_cast<std::size_t>(i) * k * n, k, n);
        DB.noalias() += CMapMat(av + static_cast<std::size_t>(i) * m * k, m, k).transpose() * G;
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  return reshape(bmm(reshape(a, {1, a.dim(0), a.dim(1)}), reshape(b, {1, b.dim(0), b.dim(1)})),
                 {a.dim(0), b.dim(1)});
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const int n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  require(w.dim(1) == in, "linear: input " + shape_str(x.shape()) + " does not match weight " +
                              shape_str(w.shape()));
  std::vector<double> out(static_cast<std::size_t>(n) * out_f);
  MapMat Y(out.data(), n, out_f);
  Y.noalias() = CMapMat(x.data().data(), n, in) * CMapMat(w.data().data(), out_f, in).transpose();
  return make_result({n, out_f}, std::move(out), {x, w}, [n, in, out_f](TensorImpl& self) {
    CMapMat G(self.grad.data(), n, out_f);
    if (double* dx = parent_grad(self, 0)) {
      MapMat(dx, n, in).noalias() += G * CMapMat(parent_data(self, 1), out_f, in);
    }
    if (double* dw = parent_grad(self, 1)) {
      MapMat(dw, out_f, in).noalias() += G.transpose() * CMapMat(parent_data(self, 0), n, in);
    }
  });
}

// --- convolution family -----------------------------------------------------

namespace {

struct ConvGeom {
  int ci, h, w, co, kh, kw, stride, pad, ho, wo;
  std::size_t k_rows() const { return static_cast<std::size_t>(ci) * kh * kw; }
  std::size_t positions() const { return static_cast<std::size_t>(ho) * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t p = g.positions();
  for (int c = 0; c < g.ci; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          double* dst = row + static_cast<std::size_t>(oy) * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.wo, 0.0);
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const std::size_t p = g.positions();
  for (int c = 0; c < g.ci; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((static_cast<std::size_t>(c) * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = dx + (static_cast<std::size_t>(c) * g.h + iy) * g.w;
          const double* src = row + static_cast<std::size_t>(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(k, 4, "conv2d");
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  require(x.dim(1) == k.dim(1), "conv2d: input " + shape_str(x.shape()) +
                                    " channel count does not match kernel " + shape_str(k.shape()));
  ConvGeom g{x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), stride, pad, 0, 0};
  require(g.h + 2 * pad >= g.kh && g.w + 2 * pad >= g.kw,
          "conv2d: kernel " + shape_str(k.shape()) + " does not fit padded input " +
              shape_str(x.shape()));
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
  const int nb = x.dim(0);
  const std::size_t in_sz = static_cast<std::size_t>(g.ci) * g.h * g.w;
  const std::size_t out_sz = static_cast<std::size_t>(g.co) * g.positions();
  std::vector<double> out(static_cast<std::size_t>(nb) * out_sz);
  CMapMat K(k.data().data(), g.co, static_cast<Eigen::Index>(g.k_rows()));
  const double* xd = x.data().data();
  parallel_for(static_cast<std::size_t>(nb), [&](std::size_t b) {
    MapMat Y(out.data() + b * out_sz, g.co, static_cast<Eigen::Index>(g.positions()));
    if (g.pointwise()) {
      Y.noalias() = K * CMapMat(xd + b * in_sz, g.ci, static_cast<Eigen::Index>(g.positions()));
    } else {
      std::vector<double> col(g.k_rows() * g.positions());
      im2col(xd + b * in_sz, g, col.data());
      Y.noalias() = K * CMapMat(col.data(), static_cast<Eigen::Index>(g.k_rows()),
                                static_cast<Eigen::Index>(g.positions()));
    }
  });
  return make_result({nb, g.co, g.ho, g.wo}, std::move(out), {x, k}, [g, nb, in_sz, out_sz](TensorImpl& self) {
    const double* xd = parent_data(self, 0);
    const double* kd = parent_data(self, 1);
    double* dx = parent_grad(self, 0);
    double* dk = parent_grad(self, 1);
    const auto kr = static_cast<Eigen::Index>(g.k_rows());
    const auto pos = static_cast<Eigen::Index>(g.positions());
    CMapMat K(kd, g.co, kr);
    // Per-sample kernel gradients are reduced in batch order afterwards so
    // the sum is independent of the thread schedule.
    std::vector<RowMat> dk_parts(dk ? nb : 0);
    parallel_for(static_cast<std::size_t>(nb), [&](std::size_t b) {
      CMapMat G(self.grad.data() + b * out_sz, g.co, pos);
      std::vector<double> col;
      const double* colp = xd + b * in_sz;
      if (!g.pointwise()) {
        col.resize(g.k_rows() * g.positions());
        if (dk) im2col(xd + b * in_sz, g, col.data());
        colp = col.data();
      }
      if (dk) dk_parts[b].noalias() = G * CMapMat(colp, kr, pos).transpose();
      if (dx) {
        if (g.pointwise()) {
          MapMat(dx + b * in_sz, g.ci, pos).noalias() += K.transpose() * G;
        } else {
          MapMat dcol(col.data(), kr, pos);
          dcol.noalias() = K.transpose() * G;
          col2im_add(col.data(), g, dx + b * in_sz);
        }
      }
    });
    if (dk) {
      MapMat DK(dk, g.co, kr);
      for (const auto& part : dk_parts) DK += part;
    }
  });
}

Tensor max_pool2d(const Tensor& x, int window, int stride) {
  require_rank(x, 4, "max_pool2d");
  require(window >= 1 && stride >= 1, "max_pool2d: window and stride must be >= 1");
  const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h >= window && w >= window, "max_pool2d: window " + std::to_string(window) +
                                          " does not fit input " + shape_str(x.shape()));
  const int ho = (h - window) / stride + 1;
  const int wo = (w - window) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(nb) * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const double* xd = x.data().data();
  std::size_t o = 0;
  for (int plane = 0; plane < nb * c; ++plane) {
    const std::size_t base = static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * stride) * w + ox * stride;
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const std::size_t idx = base + static_cast<std::size_t>(oy * stride + dy) * w + ox * stride + dx;
            if (xd[idx] > xd[best] || (std::isnan(xd[idx]) && !std::isnan(xd[best]))) best = idx;
          }
        }
        argmax[o] = best;
        out[o] = xd[best];
        if (g_branch) branch(best);
      }
    }
  }
  return make_result({nb, c, ho, wo}, std::move(out), {x}, [argmax = std::move(argmax)](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += self.grad[i];
  });
}

Tensor global_max_pool(const Tensor& x) {
  require_rank(x, 4, "global_max_pool");
  const int nb = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(hw > 0, "global_max_pool on empty spatial extent");
  std::vector<double> out(static_cast<std::size_t>(nb) * c);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double* plane = x.data().data() + p * hw;
    std::size_t best = 0;
    for (std::size_t i = 1; i < hw; ++i) {
      if (plane[i] > plane[best] || (std::isnan(plane[i]) && !std::isnan(plane[best]))) best = i;
    }
    argmax[p] = p * hw + best;
    out[p] = plane[best];
    if (g_branch) branch(best);
  }
  return make_result({nb, c}, std::move(out), {x}, [argmax = std::move(argmax)](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < argmax.size(); ++i) d[argmax[i]] += self.grad[i];
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int nb = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  require(hw > 0, "global_avg_pool on empty spatial extent");
  const double inv = 1.0 / static_cast<double>(hw);
  std::vector<double> out(static_cast<std::size_t>(nb) * c);
  for (std::size_t p = 0; p < out.size(); ++p) {
    const double* plane = x.data().data() + p * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
    out[p] = acc * inv;
  }
  return make_result({nb, c}, std::move(out), {x}, [hw, inv](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t p = 0; p < self.grad.size(); ++p) {
      const double g = self.grad[p] * inv;
      for (std::size_t i = 0; i < hw; ++i) d[p * hw + i] += g;
    }
  });
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_rank(x, 4, "upsample_nearest");
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  const int nb = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h * factor, wo = w * factor;
  std::vector<double> out(static_cast<std::size_t>(nb) * c * ho * wo);
  for (int p = 0; p < nb * c; ++p) {
    const double* src = x.data().data() + static_cast<std::size_t>(p) * h * w;
    double* dst = out.data() + static_cast<std::size_t>(p) * ho * wo;
    for (int y = 0; y < ho; ++y) {
      for (int xx = 0; xx < wo; ++xx) dst[static_cast<std::size_t>(y) * wo + xx] = src[static_cast<std::size_t>(y / factor) * w + xx / factor];
    }
  }
  return make_result({nb, c, ho, wo}, std::move(out), {x}, [nb, c, h, w, factor](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    const int ho = h * factor, wo = w * factor;
    for (int p = 0; p < nb * c; ++p) {
      const double* g = self.grad.data() + static_cast<std::size_t>(p) * ho * wo;
      double* dst = d + static_cast<std::size_t>(p) * h * w;
      for (int y = 0; y < ho; ++y) {
        for (int xx = 0; xx < wo; ++xx) dst[static_cast<std::size_t>(y / factor) * w + xx / factor] += g[static_cast<std::size_t>(y) * wo + xx];
      }
    }
  });
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  require_rank(x, 4, "pixel_shuffle");
  require(r >= 1, "pixel_shuffle: factor must be >= 1");
  const int nb = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(cin % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(cin) +
                                  " not divisible by r^2 = " + std::to_string(r * r));
  const int c = cin / (r * r);
  const int ho = h * r, wo = w * r;
  // Output flat index for every input element; backward is the inverse gather.
  std::vector<std::size_t> dest(x.numel());
  std::vector<double> out(x.numel());
  std::size_t i = 0;
  for (int b = 0; b < nb; ++b) {
    for (int ch = 0; ch < cin; ++ch) {
      const int oc = ch / (r * r);
      const int dy = (ch % (r * r)) / r;
      const int dx = ch % r;
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx, ++i) {
          const std::size_t o = ((static_cast<std::size_t>(b) * c + oc) * ho + (y * r + dy)) * wo + (xx * r + dx);
          dest[i] = o;
          out[o] = x.data()[i];
        }
      }
    }
  }
  return make_result({nb, c, ho, wo}, std::move(out), {x}, [dest = std::move(dest)](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t k = 0; k < dest.size(); ++k) d[k] += self.grad[dest[k]];
  });
}

Tensor softmax(const Tensor& x) {
  require(x.ndim() >= 1, "softmax of a rank-0 tensor");
  const int n = x.dim(-1);
  require(n > 0, "softmax over an empty axis");
  const std::size_t rows = x.numel() / static_cast<std::size_t>(n);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (int j = 0; j < n; ++j) o[j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g[j] * y[j];
      for (int j = 0; j < n; ++j) d[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                 Tensor& running_var, bool training, double momentum, double eps) {
  require(x.ndim() == 2 || x.ndim() == 4, "batchnorm: expected [n,c] or [b,c,h,w], got " + shape_str(x.shape()));
  const int nb = x.dim(0), c = x.dim(1);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    require(t->ndim() == 1 && t->dim(0) == c, "batchnorm: parameter " + shape_str(t->shape()) +
                                                  " does not match input " + shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / (static_cast<std::size_t>(nb) * c);
  const std::size_t count = static_cast<std::size_t>(nb) * inner;
  require(count > 0, "batchnorm on an empty batch");
  const double* xd = x.data().data();
  auto at = [&](int b, int ch) { return (static_cast<std::size_t>(b) * c + ch) * inner; };

  std::vector<double> inv_std(c), xhat(x.numel()), out(x.numel());
  for (int ch = 0; ch < c; ++ch) {
    double mu = 0.0, var = 0.0;
    if (training) {
      for (int b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < inner; ++i) mu += xd[at(b, ch) + i];
      }
      mu /= static_cast<double>(count);
      for (int b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < inner; ++i) {
          const double dv = xd[at(b, ch) + i] - mu;
          var += dv * dv;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      running_mean.data()[ch] = (1.0 - momentum) * running_mean.data()[ch] + momentum * mu;
      running_var.data()[ch] = (1.0 - momentum) * running_var.data()[ch] + momentum * unbiased;
    } else {
      mu = running_mean.data()[ch];
      var = running_var.data()[ch];
    }
    inv_std[ch] = 1.0 / std::sqrt(var + eps);
    const double gm = gamma.data()[ch], bt = beta.data()[ch];
    for (int b = 0; b < nb; ++b) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = at(b, ch) + i;
        xhat[k] = (xd[k] - mu) * inv_std[ch];
        out[k] = gm * xhat[k] + bt;
      }
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [nb, c, inner, count, training, inv_std = std::move(inv_std),
                      xhat = std::move(xhat)](TensorImpl& self) {
                       const auto& g = self.grad;
                       const double* gm = parent_data(self, 1);
                       double* dx = parent_grad(self, 0);
                       double* dgamma = parent_grad(self, 1);
                       double* dbeta = parent_grad(self, 2);
                       auto at = [&](int b, int ch) { return (static_cast<std::size_t>(b) * c + ch) * inner; };
                       for (int ch = 0; ch < c; ++ch) {
                         double sum_g = 0.0, sum_gx = 0.0;
                         for (int b = 0; b < nb; ++b) {
                           for (std::size_t i = 0; i < inner; ++i) {
                             const std::size_t k = at(b, ch) + i;
                             sum_g += g[k];
                             sum_gx += g[k] * xhat[k];
                           }
                         }
                         if (dgamma) dgamma[ch] += sum_gx;
                         if (dbeta) dbeta[ch] += sum_g;
                         if (!dx) continue;
                         const double scale = gm[ch] * inv_std[ch];
                         if (training) {
                           const double mg = sum_g / static_cast<double>(count);
                           const double mgx = sum_gx / static_cast<double>(count);
                           for (int b = 0; b < nb; ++b) {
                             for (std::size_t i = 0; i < inner; ++i) {
                               const std::size_t k = at(b, ch) + i;
                               dx[k] += scale * (g[k] - mg - xhat[k] * mgx);
                             }
                           }
                         } else {
                           for (int b = 0; b < nb; ++b) {
                             for (std::size_t i = 0; i < inner; ++i) dx[at(b, ch) + i] += scale * g[at(b, ch) + i];
                           }
                         }
                       }
                     });
}

Tensor grl(const Tensor& x, double lambda) {
  require(lambda >= 0.0, "grl: lambda must be >= 0");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(x.shape(), std::move(out), {x}, [lambda](TensorImpl& self) {
    double* d = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += -lambda * self.grad[i];
  });
}

// --- row-wise helpers -------------------------------------------------------

Tensor rowdot(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "rowdot");
  require_same_shape(a, b, "rowdot");
  const int n = a.dim(0), d = a.dim(1);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += a.data()[static_cast<std::size_t>(i) * d + j] * b.data()[static_cast<std::size_t>(i) * d + j];
    out[i] = acc;
  }
  return make_result({n, 1}, std::move(out), {a, b}, [n, d](TensorImpl& self) {
    const double* av = parent_data(self, 0);
    const double* bv = parent_data(self, 1);
    double* da = parent_grad(self, 0);
    double* db = parent_grad(self, 1);
    for (int i = 0; i < n; ++i) {
      const double g = self.grad[i];
      for (int j = 0; j < d; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * d + j;
        if (da) da[k] += g * bv[k];
        if (db) db[k] += g * av[k];
      }
    }
  });
}

Tensor row_scale(const Tensor& v, const Tensor& s) {
  require_rank(v, 2, "row_scale");
  require(s.ndim() == 2 && s.dim(0) == v.dim(0) && s.dim(1) == 1,
          "row_scale: scale " + shape_str(s.shape()) + " does not match " + shape_str(v.shape()));
  const int n = v.dim(0), d = v.dim(1);
  std::vector<double> out(v.numel());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i) * d + j] = v.data()[static_cast<std::size_t>(i) * d + j] * s.data()[i];
  }
  return make_result(v.shape(), std::move(out), {v, s}, [n, d](TensorImpl& self) {
    const double* vv = parent_data(self, 0);
    const double* sv = parent_data(self, 1);
    double* dv = parent_grad(self, 0);
    double* ds = parent_grad(self, 1);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * d + j;
        if (dv) dv[k] += self.grad[k] * sv[i];
        acc += self.grad[k] * vv[k];
      }
      if (ds) ds[i] += acc;
    }
  });
}

Tensor safe_ratio(const Tensor& num, const Tensor& den, double min_den) {
  require_same_shape(num, den, "safe_ratio");
  std::vector<double> out(num.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = den.data()[i] >= min_den ? num.data()[i] / den.data()[i] : 0.0;
    if (g_branch) branch(den.data()[i] >= min_den);
  }
  return make_result(num.shape(), std::move(out), {num, den}, [min_den](TensorImpl& self) {
    const double* nv = parent_data(self, 0);
    const double* dv = parent_data(self, 1);
    double* dn = parent_grad(self, 0);
    double* dd = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (!(dv[i] >= min_den)) continue;
      if (dn) dn[i] += self.grad[i] / dv[i];
      if (dd) dd[i] -= self.grad[i] * nv[i] / (dv[i] * dv[i]);
    }
  });
}

// --- losses -----------------------------------------------------------------

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  require(pred.numel() > 0, "l1_loss on empty tensors");
  const double inv = 1.0 / static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double diff = pred.data()[i] - target.data()[i];
    acc += std::abs(diff);
    if (g_branch) branch(diff > 0.0 ? 1 : (diff < 0.0 ? 2 : 0));
  }
  return make_result({1}, {acc * inv}, {pred, target}, [inv](TensorImpl& self) {
    const double* p = parent_data(self, 0);
    const double* t = parent_data(self, 1);
    double* dp = parent_grad(self, 0);
    double* dt = parent_grad(self, 1);
    const double g = self.grad[0] * inv;
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double s = p[i] > t[i] ? 1.0 : (p[i] < t[i] ? -1.0 : 0.0);
      if (dp) dp[i] += g * s;
      if (dt) dt[i] -= g * s;
    }
  });
}

Tensor bce(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "bce");
  require(pred.numel() > 0, "bce on empty tensors");
  constexpr double lo = 1e-7;
  constexpr double hi = 1.0 - 1e-7;
  const double inv = 1.0 / static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double p = std::clamp(pred.data()[i], lo, hi);
    const double t = target.data()[i];
    if (g_branch) branch(pred.data()[i] < lo ? 1 : (pred.data()[i] > hi ? 2 : 0));
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  // The target is treated as a constant.
  return make_result({1}, {acc * inv}, {pred}, [inv, target = target.detach()](TensorImpl& self) {
    const double* p = parent_data(self, 0);
    const auto t = target.data();
    double* dp = parent_grad(self, 0);
    const double g = self.grad[0] * inv;
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] < lo || p[i] > hi) continue;
      dp[i] += -g * (t[i] / p[i] - (1.0 - t[i]) / (1.0 - p[i]));
    }
  });
}

}  // namespace tubuda::ops
