#include "tubuda/hybrid.hpp"

#include <string>

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"

namespace tubuda {

void HybridConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("hybrid beta must lie in [0, 1]");
  if (n < 1) throw ConfigError("hybrid feature count must be >= 1");
}

std::vector<int> HybridConfig::block_widths() const {
  return preset == WidthPreset::full ? std::vector<int>{64, 128, 256, 512}
                                      : std::vector<int>{8, 16, 32, 64};
}

int HybridConfig::projection_width() const { return preset == WidthPreset::full ? 2048 : 256; }

FeatureStack augment(const FeatureStack& stack, Augment op) {
  FeatureStack out{augment(stack.base, op), {}};
  for (const auto& f : stack.features) out.features.push_back(augment(f, op));
  return out;
}

FeatureStack crop(const FeatureStack& stack, int x0, int y0, int w, int h) {
  FeatureStack out{crop(stack.base, x0, y0, w, h), {}};
  for (const auto& f : stack.features) out.features.push_back(crop(f, x0, y0, w, h));
  return out;
}

StackBatch to_batch(std::span<const FeatureStack> stacks) {
  if (stacks.empty()) throw InvalidArgument("to_batch: empty batch");
  const int n = stacks[0].n();
  const int w = stacks[0].base.width();
  const int h = stacks[0].base.height();
  const auto b = static_cast<int>(stacks.size());
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<double> feats, img, input;
  feats.reserve(stacks.size() * n * plane);
  img.reserve(stacks.size() * plane);
  input.reserve(stacks.size() * (n + 1) * plane);
  for (const auto& s : stacks) {
    if (s.n() != n || s.base.width() != w || s.base.height() != h) {
      throw InvalidArgument("to_batch: stacks differ in feature count or size");
    }
    for (const auto& f : s.features) {
      if (!f.same_shape(s.base)) throw InvalidArgument("to_batch: feature size differs from base");
      feats.insert(feats.end(), f.data().begin(), f.data().end());
      for (double v : f.data()) input.push_back(v / 255.0);
    }
    img.insert(img.end(), s.base.data().begin(), s.base.data().end());
    for (double v : s.base.data()) input.push_back(v / 255.0);
  }
  return {Tensor::from({b, n, h, w}, std::move(feats)), Tensor::from({b, 1, h, w}, std::move(img)),
          Tensor::from({b, n + 1, h, w}, std::move(input))};
}

Tensor compose_hybrid_raw(const Tensor& features, const Tensor& image, const Tensor& alpha,
                          double beta) {
  if (features.ndim() != 4 || image.ndim() != 4 || alpha.ndim() != 2) {
    throw InvalidArgument("compose_hybrid: expected features [b,n,H,W], image [b,1,H,W], alpha [b,n]");
  }
  const int b = features.dim(0), n = features.dim(1), h = features.dim(2), w = features.dim(3);
  if (alpha.dim(0) != b || alpha.dim(1) != n) {
    throw InvalidArgument("compose_hybrid: alpha " + shape_str(alpha.shape()) +
                          " does not match feature stack " + shape_str(features.shape()));
  }
  if (image.shape() != Shape{b, 1, h, w}) {
    throw InvalidArgument("compose_hybrid: image " + shape_str(image.shape()) +
                          " does not match feature stack " + shape_str(features.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(b) * plane);
  const double* f = features.data().data();
  const double* a = alpha.data().data();
  const double* im = image.data().data();
  for (int s = 0; s < b; ++s) {
    for (std::size_t p = 0; p < plane; ++p) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += a[s * n + i] * (255.0 - f[(static_cast<std::size_t>(s) * n + i) * plane + p]);
      }
      out[s * plane + p] = beta * acc + (1.0 - beta) * im[s * plane + p];
    }
  }
  return make_result({b, 1, h, w}, std::move(out), {features, image, alpha},
                     [b, n, plane, beta](TensorImpl& self) {
                       const auto& g = self.grad;
                       const double* f = self.parents[0]->data.data();
                       const double* a = self.parents[2]->data.data();
                       TensorImpl& fp = *self.parents[0];
                       TensorImpl& ip = *self.parents[1];
                       TensorImpl& ap = *self.parents[2];
                       for (int s = 0; s < b; ++s) {
                         for (int i = 0; i < n; ++i) {
                           const std::size_t fo = (static_cast<std::size_t>(s) * n + i) * plane;
                           if (ap.requires_grad) {
                             double acc = 0.0;
                             for (std::size_t p = 0; p < plane; ++p) acc += g[s * plane + p] * (255.0 - f[fo + p]);
                             ap.grad_buffer()[s * n + i] += beta * acc;
                           }
                           if (fp.requires_grad) {
                             auto& df = fp.grad_buffer();
                             for (std::size_t p = 0; p < plane; ++p) df[fo + p] -= beta * a[s * n + i] * g[s * plane + p];
                           }
                         }
                         if (ip.requires_grad) {
                           auto& di = ip.grad_buffer();
                           for (std::size_t p = 0; p < plane; ++p) di[s * plane + p] += (1.0 - beta) * g[s * plane + p];
                         }
                       }
                     });
}

Tensor compose_hybrid(const Tensor& features, const Tensor& image, const Tensor& alpha, double beta) {
  return ops::scale(compose_hybrid_raw(features, image, alpha, beta), 1.0 / 255.0);
}

FeatureWeightModule::FeatureWeightModule(const HybridConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = cfg_.n + 1;
  int i = 0;
  for (int width : cfg_.block_widths()) {
    const std::string name = "block" + std::to_string(i++);
    blocks_.push_back({make_conv(params_, name + ".conv", in, width, 3, rng, false),
                       make_batchnorm(params_, name + ".bn", width)});
    in = width;
  }
  projection_ = make_conv(params_, "projection", in, cfg_.projection_width(), 1, rng);
  head_ = make_linear(params_, "head", cfg_.projection_width(), cfg_.n, rng);
  if (cfg_.zero_init_head) {
    for (double& v : head_.weight.data()) v = 0.0;
    for (double& v : head_.bias.data()) v = 0.0;
  }
}

Tensor FeatureWeightModule::predict_weights(const Tensor& input, Mode mode) const {
  if (input.ndim() != 4 || input.dim(1) != cfg_.n + 1) {
    throw InvalidArgument("predict_weights: expected [b," + std::to_string(cfg_.n + 1) +
                          ",H,W] input, got " + shape_str(input.shape()));
  }
  Tensor x = input;
  for (const auto& blk : blocks_) {
    x = ops::relu(blk.bn(blk.conv(x), mode));
    x = ops::max_pool2d(x, 2, 2);
  }
  x = ops::global_max_pool(projection_(x));
  Tensor logits = head_(x);
  return cfg_.activation == WeightActivation::sigmoid ? ops::sigmoid(logits) : ops::softmax(logits);
}

HybridOutput FeatureWeightModule::forward(const StackBatch& batch, Mode mode) const {
  Tensor alpha = predict_weights(batch.input, mode);
  return {alpha, compose_hybrid(batch.features, batch.image, alpha, cfg_.beta)};
}

}  // namespace tubuda
