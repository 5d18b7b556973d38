#include "tubuda/train.hpp"

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"
#include "tubuda/parallel.hpp"

namespace tubuda {

void SegConfig::validate() const {
  hybrid.validate();
  unet.validate();
  disc.validate();
  weights.validate();
  optim.validate();
  if (!(grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be >= 0");
  if (disc.channels != unet.bottleneck_channels()) {
    throw ConfigError("discriminator channels " + std::to_string(disc.channels) +
                      " do not match the U-Net bottleneck " + std::to_string(unet.bottleneck_channels()));
  }
}

Image segmentation_input(const Image& img, const SrModel* sr, const VesselnessParams& vp) {
  if (!sr) return img;
  Image hrg = sr_apply(*sr, img, vp);
  if (hrg.same_shape(img)) return hrg;
  Image back = resize_cubic(hrg, img.width(), img.height());
  for (double& v : back.data()) v = std::round(v);
  return back;
}

namespace {

std::vector<FeatureStack> prepare_stacks(const DatasetSplit& split, const SrModel* sr,
                                         const VesselnessParams& vp) {
  std::vector<FeatureStack> out(split.size());
  parallel_for(split.size(), [&](std::size_t i) {
    out[i] = extract_stack(segmentation_input(split.image(i), sr, vp), vp);
  });
  return out;
}

Tensor membrane_targets(std::span<const SourceSample> batch) {
  const Image& first = batch.front().label;
  std::vector<double> t;
  t.reserve(batch.size() * first.size());
  for (const auto& s : batch) {
    for (double v : s.label.data()) t.push_back(v == kMembraneValue ? 1.0 : 0.0);
  }
  return Tensor::from({static_cast<int>(batch.size()), 1, first.height(), first.width()}, std::move(t));
}

}  // namespace

std::vector<SourceSample> prepare_source(const DatasetSplit& split, const SrModel* sr,
                                         const VesselnessParams& vp) {
  if (!split.labels_readable()) throw ConfigError("source preparation needs a labelled split");
  std::vector<FeatureStack> stacks = prepare_stacks(split, sr, vp);
  std::vector<SourceSample> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    validate_sample(split.sample(i));
    out.push_back({std::move(stacks[i]), split.label(i)});
  }
  return out;
}

std::vector<TargetSample> prepare_target(const DatasetSplit& split, const SrModel* sr,
                                         const VesselnessParams& vp) {
  std::vector<FeatureStack> stacks = prepare_stacks(split, sr, vp);
  std::vector<TargetSample> out;
  for (auto& s : stacks) out.push_back({std::move(s)});
  return out;
}

SegModel::SegModel(const SegConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(derive_seed(seed, 0x5345'47)),
      hybrid(cfg.hybrid, init_rng_),
      unet(cfg.unet, init_rng_),
      disc(cfg.disc, init_rng_) {}

UNetOutput SegModel::forward(const StackBatch& batch, Mode mode) const {
  Tensor x = cfg_.use_hfi ? hybrid.forward(batch, mode).hfi : ops::scale(batch.image, 1.0 / 255.0);
  return unet.forward(x, mode);
}

Image SegModel::probability(const FeatureStack& stack) const {
  NoGradGuard guard;
  const StackBatch b = to_batch(std::span<const FeatureStack>(&stack, 1));
  Tensor p = ops::sigmoid(forward(b, Mode::eval).logits);
  Image out(stack.base.width(), stack.base.height(), ValueRange::unit);
  std::copy(p.data().begin(), p.data().end(), out.data().begin());
  return out;
}

Image SegModel::predict(const FeatureStack& stack) const {
  Image p = probability(stack);
  Image out(p.width(), p.height(), ValueRange::byte);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = p.data()[i] >= 0.5 ? kMembraneValue : kBackgroundValue;
  }
  return out;
}

void SegModel::save(const std::filesystem::path& dir) const {
  hybrid.params().save(dir / "seg_hybrid.ckpt");
  unet.params().save(dir / "unet.ckpt");
  disc.params().save(dir / "disc.ckpt");
}

void SegModel::load(const std::filesystem::path& dir) {
  hybrid.params().load(dir / "seg_hybrid.ckpt");
  unet.params().load(dir / "unet.ckpt");
  disc.params().load(dir / "disc.ckpt");
}

LossReport uda_step(SegModel& model, Adam& opt, std::span<const SourceSample> source,
                    std::span<const TargetSample> target) {
  if (source.empty()) throw InvalidArgument("uda_step: empty source batch");
  const SegConfig& cfg = model.config();
  const bool adversarial = !cfg.weights.all_zero();
  if (adversarial && target.empty()) throw InvalidArgument("uda_step: empty target batch");

  std::vector<FeatureStack> stacks;
  for (const auto& s : source) stacks.push_back(s.stack);
  if (adversarial) {
    for (const auto& t : target) stacks.push_back(t.stack);
  }
  const int ns = static_cast<int>(source.size());
  const int nt = adversarial ? static_cast<int>(target.size()) : 0;
  const UNetOutput out = model.forward(to_batch(stacks), Mode::train);

  Tensor logits = adversarial ? ops::slice(out.logits, 0, 0, ns) : out.logits;
  Tensor seg = ops::bce(ops::sigmoid(logits), membrane_targets(source));

  std::array<Tensor, 3> src_d, tgt_d;
  if (adversarial) {
    const DiscriminatorOutput d = model.disc.forward(ops::grl(out.bottleneck, cfg.grl_lambda), Mode::train);
    const Tensor zeros = Tensor::zeros({ns, 1});
    const Tensor ones = Tensor::full({nt, 1}, 1.0);
    for (std::size_t k = 0; k < d.probs.size(); ++k) {
      src_d[k] = ops::bce(ops::slice(d.probs[k], 0, 0, ns), zeros);
      tgt_d[k] = ops::bce(ops::slice(d.probs[k], 0, ns, ns + nt), ones);
    }
  }
  GraphLoss loss = compose_losses(seg, src_d, tgt_d, cfg.weights);
  loss.report.step = opt.steps_taken();
  opt.zero_grad();
  loss.total.backward();
  opt.step();
  return loss.report;
}

std::vector<LossReport> uda_train(SegModel& model, std::span<const SourceSample> source,
                                  std::span<const TargetSample> target,
                                  const std::function<void(const LossReport&)>& on_step) {
  const SegConfig& cfg = model.config();
  if (source.empty()) throw ConfigError("uda training needs source samples");
  const bool adversarial = !cfg.weights.all_zero();
  if (adversarial && target.empty()) throw ConfigError("uda training needs target samples");

  Adam opt(cfg.optim);
  if (cfg.use_hfi) opt.add(model.hybrid.params());
  opt.add(model.unet.params());
  if (adversarial) opt.add(model.disc.params());

  Rng rng(derive_seed(cfg.optim.seed, 0x5544'41));
  auto pick_aug = [&](const FeatureStack& s) {
    if (!cfg.augment || s.base.width() != s.base.height()) return Augment::identity;
    return static_cast<Augment>(rng.below(6));
  };
  std::vector<LossReport> reports;
  for (int step = 0; step < cfg.optim.steps; ++step) {
    std::vector<SourceSample> sb;
    std::vector<TargetSample> tb;
    for (int k = 0; k < cfg.optim.batch_size; ++k) {
      const SourceSample& s = source[rng.below(source.size())];
      const Augment op = pick_aug(s.stack);
      sb.push_back({augment(s.stack, op), augment(s.label, op)});
    }
    if (adversarial) {
      for (int k = 0; k < cfg.optim.batch_size; ++k) {
        const TargetSample& t = target[rng.below(target.size())];
        tb.push_back({augment(t.stack, pick_aug(t.stack))});
      }
    }
    reports.push_back(uda_step(model, opt, sb, tb));
    if (on_step) on_step(reports.back());
  }
  return reports;
}

EvalReport evaluate_split(const SegModel& model, const DatasetSplit& split, const SrModel* sr,
                          const VesselnessParams& vp, std::vector<Image>* predictions) {
  if (!split.labels_readable()) throw ConfigError("evaluation needs a split with readable labels");
  std::vector<Image> preds(split.size());
  std::vector<EvalResult> results(split.size());
  parallel_for(split.size(), [&](std::size_t i) {
    if (!split.has_label(i)) throw ConfigError("evaluation sample '" + split.id(i) + "' has no label");
    preds[i] = model.predict(extract_stack(segmentation_input(split.image(i), sr, vp), vp));
    results[i] = evaluate_pair(split.id(i), preds[i], split.label(i));
  });
  if (predictions) *predictions = std::move(preds);
  return summarize(std::move(results));
}

}  // namespace tubuda
