#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tubuda/hybrid.hpp"
#include "tubuda/imgio.hpp"
#include "tubuda/optim.hpp"

namespace tubuda {

struct SrConfig {
  double eta = 0.9;
  int scale_factor = 2;
  int n_blocks = 4;
  WidthPreset preset = WidthPreset::desk;
  /// Block-average factor of the degradation that produces training inputs.
  int degrade_factor = 2;

  void validate() const;
  int channels() const { return preset == WidthPreset::full ? 64 : 16; }
};

/// eta * hr + (1 - eta) * seg per pixel, byte scale.
Image make_sr_label(const Image& hr, const Image& seg, double eta);

/// Multi-scale residual super-resolution network on a one-channel input.
class SrNet {
 public:
  SrNet(const SrConfig& cfg, Rng& rng);

  /// [b, 1, H, W] -> [b, 1, H * s, W * s].
  Tensor forward(const Tensor& x) const;

  const SrConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct Block {
    Conv2d s1, p1, s2, p2, fuse;
  };
  SrConfig cfg_;
  ParamStore params_;
  Conv2d stem_;
  std::vector<Block> blocks_;
  Conv2d bottleneck_;
  Conv2d upsample_;
  Conv2d out_;
};

/// Where a network input image came from. Training consumes degraded
/// proxies only; originals are for inference.
enum class Provenance { original, degraded };

struct SrSample {
  FeatureStack input;
  std::optional<Image> label;  ///< training target at input size * scale_factor
  Provenance provenance = Provenance::original;
};

/// Degrades a labelled source sample into a training pair: the input is
/// downsample_then_upsample(image, degrade_factor), further block-averaged
/// by scale_factor when it exceeds 1; the target is the mixed label built
/// from the untouched image.
SrSample make_sr_training_sample(const LabeledSample& sample, const SrConfig& cfg,
                                 const VesselnessParams& vp);
/// Wraps an original image for inference.
SrSample make_sr_inference_sample(const Image& img, const VesselnessParams& vp);

SrSample augment(const SrSample& s, Augment op);
/// Crop in input coordinates; the label crop is scaled accordingly.
SrSample crop(const SrSample& s, int x0, int y0, int size, int scale_factor);

/// The super-resolution stage: its own feature-weight module plus the
/// network, each with separate parameters.
struct SrModel {
  SrModel(const HybridConfig& hcfg, const SrConfig& scfg, std::uint64_t seed);

 private:
  Rng init_rng_;

 public:
  FeatureWeightModule hybrid;
  SrNet net;

  /// Writes/reads sr_hybrid.ckpt and sr_net.ckpt inside `dir`.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);
};

/// L1 between the network output and the label (divided by 255).
Tensor sr_loss(const SrModel& model, std::span<const SrSample> batch, Mode mode);

/// One Adam step on the L1 loss. Throws InvalidArgument for unlabelled
/// samples or samples flagged as originals, NumericError on a non-finite
/// loss.
double sr_train_step(SrModel& model, Adam& opt, std::span<const SrSample> batch);

struct SrTrainConfig {
  OptimConfig optim;
  /// Random square crop edge in input pixels; 0 trains on whole images.
  int crop = 16;
  bool augment = true;
};

/// Trains on the labelled samples of a source/train split. `on_step`
/// receives (step index, loss).
std::vector<double> sr_train(SrModel& model, const DatasetSplit& source,
                             const VesselnessParams& vp, const SrTrainConfig& cfg,
                             const std::function<void(int, double)>& on_step = {});

/// Feature extraction, weighting, composition and super-resolution of an
/// original image; byte-range output of size input * scale_factor.
Image sr_apply(const SrModel& model, const Image& img, const VesselnessParams& vp);

}  // namespace tubuda
