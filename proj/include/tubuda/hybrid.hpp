#pragma once

#include <span>
#include <string>
#include <vector>

#include "tubuda/filters.hpp"
#include "tubuda/imgio.hpp"
#include "tubuda/nn.hpp"

namespace tubuda {

enum class WidthPreset { desk, full };

/// Activation turning the linear head output into per-feature weights.
enum class WeightActivation { sigmoid, softmax };

struct HybridConfig {
  double beta = 0.5;  ///< weight of all structural features
  int n = kFeatureCount;
  WidthPreset preset = WidthPreset::desk;
  WeightActivation activation = WeightActivation::sigmoid;
  bool zero_init_head = false;

  void validate() const;
  /// Conv block widths, then the projection width before global pooling.
  std::vector<int> block_widths() const;
  int projection_width() const;
};

/// A batch of feature stacks laid out for the networks.
struct StackBatch {
  Tensor features;  ///< [b, n, H, W], byte scale
  Tensor image;     ///< [b, 1, H, W], byte scale
  Tensor input;     ///< [b, n + 1, H, W], features then image, divided by 255
};

/// Applies the same pixel permutation / crop to the base and every feature.
FeatureStack augment(const FeatureStack& stack, Augment op);
FeatureStack crop(const FeatureStack& stack, int x0, int y0, int w, int h);

StackBatch to_batch(std::span<const FeatureStack> stacks);

/// F^H = beta * sum_i alpha_i * (255 - F_i) + (1 - beta) * F_img per pixel,
/// byte scale, unclamped. features [b, n, H, W], image [b, 1, H, W],
/// alpha [b, n].
Tensor compose_hybrid_raw(const Tensor& features, const Tensor& image, const Tensor& alpha,
                          double beta);
/// compose_hybrid_raw divided by 255 for network consumption.
Tensor compose_hybrid(const Tensor& features, const Tensor& image, const Tensor& alpha,
                      double beta);

struct HybridOutput {
  Tensor alpha;  ///< [b, n]
  Tensor hfi;    ///< [b, 1, H, W], network scale
};

/// Learns one weight per structural feature and image from the stack.
/// Each instance owns its parameters; the super-resolution and the
/// segmentation stages hold separate instances.
class FeatureWeightModule {
 public:
  FeatureWeightModule(const HybridConfig& cfg, Rng& rng);

  /// input [b, n + 1, H, W] in [0, 1] -> alpha [b, n].
  Tensor predict_weights(const Tensor& input, Mode mode) const;
  HybridOutput forward(const StackBatch& batch, Mode mode) const;

  const HybridConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct Block {
    Conv2d conv;
    BatchNorm bn;
  };
  HybridConfig cfg_;
  ParamStore params_;
  std::vector<Block> blocks_;
  Conv2d projection_;
  Linear head_;
};

}  // namespace tubuda
