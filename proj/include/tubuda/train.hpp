#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "tubuda/hybrid.hpp"
#include "tubuda/losses.hpp"
#include "tubuda/metrics.hpp"
#include "tubuda/optim.hpp"
#include "tubuda/segnet.hpp"
#include "tubuda/srnet.hpp"

namespace tubuda {

struct SegConfig {
  HybridConfig hybrid;
  UNetConfig unet;
  DiscriminatorConfig disc;
  /// Feed the hybrid feature image to the U-Net; false feeds the image.
  bool use_hfi = true;
  /// Segment super-resolved images; false segments the originals.
  bool use_hrg = true;
  double grl_lambda = 1.0;
  LossWeights weights;
  OptimConfig optim;
  bool augment = true;

  void validate() const;
};

/// Labelled source image prepared for the segmentation stage.
struct SourceSample {
  FeatureStack stack;
  Image label;
};

/// Target image prepared for the segmentation stage. It has no label
/// field: target supervision cannot reach the training loop.
struct TargetSample {
  FeatureStack stack;
};

/// The image the segmentation stage sees for `img`: its HRG (resized back to
/// the input size when the super-resolution scale exceeds 1) or the image.
Image segmentation_input(const Image& img, const SrModel* sr, const VesselnessParams& vp);

std::vector<SourceSample> prepare_source(const DatasetSplit& split, const SrModel* sr,
                                         const VesselnessParams& vp);
/// Reads images only; never calls DatasetSplit::label.
std::vector<TargetSample> prepare_target(const DatasetSplit& split, const SrModel* sr,
                                         const VesselnessParams& vp);

class SegModel {
 public:
  SegModel(const SegConfig& cfg, std::uint64_t seed);

 private:
  SegConfig cfg_;
  Rng init_rng_;

 public:
  FeatureWeightModule hybrid;
  UNet unet;
  Discriminator disc;

  const SegConfig& config() const { return cfg_; }
  /// Per-pixel membrane logits for a batch of prepared stacks.
  UNetOutput forward(const StackBatch& batch, Mode mode) const;
  /// Membrane mask image (membrane 0, background 255) via p >= 0.5.
  Image predict(const FeatureStack& stack) const;
  /// Membrane probability map in [0, 1].
  Image probability(const FeatureStack& stack) const;

  /// seg_hybrid.ckpt, unet.ckpt and disc.ckpt inside `dir`.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);
};

/// One optimisation step on a source batch and a target batch. With every
/// mu zero the target batch and the discriminator are skipped.
LossReport uda_step(SegModel& model, Adam& opt, std::span<const SourceSample> source,
                    std::span<const TargetSample> target);

/// Runs cfg.optim.steps steps, drawing batches with a generator seeded from
/// cfg.optim.seed. `on_step` sees every report.
std::vector<LossReport> uda_train(SegModel& model, std::span<const SourceSample> source,
                                  std::span<const TargetSample> target,
                                  const std::function<void(const LossReport&)>& on_step = {});

/// Segments every image of a labelled split and scores it.
EvalReport evaluate_split(const SegModel& model, const DatasetSplit& split, const SrModel* sr,
                          const VesselnessParams& vp, std::vector<Image>* predictions = nullptr);

}  // namespace tubuda
