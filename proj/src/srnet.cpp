#include "tubuda/srnet.hpp"

#include <cmath>
#include <string>

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"

namespace tubuda {

void SrConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("sr eta must lie in [0, 1]");
  if (scale_factor < 1) throw ConfigError("sr scale_factor must be >= 1");
  if (n_blocks < 1) throw ConfigError("sr n_blocks must be >= 1");
  if (degrade_factor < 2) throw ConfigError("sr degrade_factor must be >= 2");
}

Image make_sr_label(const Image& hr, const Image& seg, double eta) {
  if (!hr.same_shape(seg)) {
    throw InvalidArgument("make_sr_label: image " + std::to_string(hr.width()) + "x" +
                          std::to_string(hr.height()) + " and label " + std::to_string(seg.width()) +
                          "x" + std::to_string(seg.height()) + " differ in size");
  }
  Image out(hr.width(), hr.height(), ValueRange::byte);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = eta * hr.data()[i] + (1.0 - eta) * seg.data()[i];
  return out;
}

SrNet::SrNet(const SrConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels();
  stem_ = make_conv(params_, "stem", 1, c, 3, rng);
  for (int i = 0; i < cfg_.n_blocks; ++i) {
    const std::string p = "block" + std::to_string(i);
    blocks_.push_back({make_conv(params_, p + ".s1", c, c, 3, rng),
                       make_conv(params_, p + ".p1", c, c, 5, rng),
                       make_conv(params_, p + ".s2", 2 * c, 2 * c, 3, rng),
                       make_conv(params_, p + ".p2", 2 * c, 2 * c, 5, rng),
                       make_conv(params_, p + ".fuse", 4 * c, c, 1, rng)});
  }
  bottleneck_ = make_conv(params_, "bottleneck", c * (cfg_.n_blocks + 1), c, 1, rng);
  const int s = cfg_.scale_factor;
  upsample_ = make_conv(params_, "upsample", c, c * s * s, 3, rng);
  out_ = make_conv(params_, "out", c, 1, 3, rng);
}

Tensor SrNet::forward(const Tensor& x) const {
  if (x.ndim() != 4 || x.dim(1) != 1) {
    throw InvalidArgument("sr_forward: expected [b,1,H,W], got " + shape_str(x.shape()));
  }
  Tensor h = stem_(x);
  std::vector<Tensor> features{h};
  for (const auto& b : blocks_) {
    Tensor s1 = ops::relu(b.s1(h));
    Tensor p1 = ops::relu(b.p1(h));
    Tensor mid = ops::concat({s1, p1}, 1);
    Tensor s2 = ops::relu(b.s2(mid));
    Tensor p2 = ops::relu(b.p2(mid));
    h = ops::add(b.fuse(ops::concat({s2, p2}, 1)), h);
    features.push_back(h);
  }
  Tensor y = bottleneck_(ops::concat(features, 1));
  y = ops::pixel_shuffle(upsample_(y), cfg_.scale_factor);
  return out_(y);
}

SrSample make_sr_training_sample(const LabeledSample& sample, const SrConfig& cfg,
                                 const VesselnessParams& vp) {
  validate_sample(sample);
  cfg.validate();
  Image input = downsample_then_upsample(sample.image, cfg.degrade_factor);
  if (cfg.scale_factor > 1) input = block_downsample(input, cfg.scale_factor);
  return {extract_stack(input, vp), make_sr_label(sample.image, sample.label, cfg.eta),
          Provenance::degraded};
}

SrSample make_sr_inference_sample(const Image& img, const VesselnessParams& vp) {
  return {extract_stack(img, vp), std::nullopt, Provenance::original};
}

SrSample augment(const SrSample& s, Augment op) {
  SrSample out{augment(s.input, op), std::nullopt, s.provenance};
  if (s.label) out.label = augment(*s.label, op);
  return out;
}

SrSample crop(const SrSample& s, int x0, int y0, int size, int scale_factor) {
  SrSample out{crop(s.input, x0, y0, size, size), std::nullopt, s.provenance};
  if (s.label) {
    out.label = crop(*s.label, x0 * scale_factor, y0 * scale_factor, size * scale_factor,
                     size * scale_factor);
  }
  return out;
}

SrModel::SrModel(const HybridConfig& hcfg, const SrConfig& scfg, std::uint64_t seed)
    : init_rng_(derive_seed(seed, 0x5352)), hybrid(hcfg, init_rng_), net(scfg, init_rng_) {}

void SrModel::save(const std::filesystem::path& dir) const {
  hybrid.params().save(dir / "sr_hybrid.ckpt");
  net.params().save(dir / "sr_net.ckpt");
}

void SrModel::load(const std::filesystem::path& dir) {
  hybrid.params().load(dir / "sr_hybrid.ckpt");
  net.params().load(dir / "sr_net.ckpt");
}

Tensor sr_loss(const SrModel& model, std::span<const SrSample> batch, Mode mode) {
  std::vector<FeatureStack> stacks;
  std::vector<double> target;
  int th = 0, tw = 0;
  for (const auto& s : batch) {
    if (s.provenance == Provenance::original) {
      throw InvalidArgument("sr training refuses samples flagged as original images");
    }
    if (!s.label) throw InvalidArgument("sr training requires labelled samples; got an unlabelled one");
    stacks.push_back(s.input);
    th = s.label->height();
    tw = s.label->width();
    for (double v : s.label->data()) target.push_back(v / 255.0);
  }
  const StackBatch b = to_batch(stacks);
  Tensor pred = model.net.forward(model.hybrid.forward(b, mode).hfi);
  Tensor t = Tensor::from({static_cast<int>(batch.size()), 1, th, tw}, std::move(target));
  if (pred.shape() != t.shape()) {
    throw InvalidArgument("sr label " + shape_str(t.shape()) + " does not match output " +
                          shape_str(pred.shape()));
  }
  return ops::l1_loss(pred, t);
}

double sr_train_step(SrModel& model, Adam& opt, std::span<const SrSample> batch) {
  Tensor loss = sr_loss(model, batch, Mode::train);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("sr_l1", "non-finite super-resolution loss");
  opt.zero_grad();
  loss.backward();
  opt.step();
  return value;
}

std::vector<double> sr_train(SrModel& model, const DatasetSplit& source, const VesselnessParams& vp,
                             const SrTrainConfig& cfg, const std::function<void(int, double)>& on_step) {
  cfg.optim.validate();
  if (source.domain() != Domain::source) throw ConfigError("sr training needs a source-domain split");
  const SrConfig& sc = model.net.config();
  std::vector<SrSample> pool;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source.has_label(i)) pool.push_back(make_sr_training_sample(source.sample(i), sc, vp));
  }
  if (pool.empty()) throw ConfigError("sr training split has no labelled samples");

  Adam opt(cfg.optim);
  opt.add(model.hybrid.params());
  opt.add(model.net.params());
  Rng rng(derive_seed(cfg.optim.seed, 0x5352'7472));
  std::vector<double> losses;
  for (int step = 0; step < cfg.optim.steps; ++step) {
    std::vector<SrSample> batch;
    for (int k = 0; k < cfg.optim.batch_size; ++k) {
      const SrSample& src = pool[rng.below(pool.size())];
      SrSample s = src;
      const int w = s.input.base.width(), h = s.input.base.height();
      if (cfg.augment && w == h) s = augment(s, static_cast<Augment>(rng.below(6)));
      if (cfg.crop > 0 && cfg.crop < std::min(w, h)) {
        const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cfg.crop + 1)));
        const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - cfg.crop + 1)));
        s = crop(s, x0, y0, cfg.crop, sc.scale_factor);
      }
      batch.push_back(std::move(s));
    }
    const double loss = sr_train_step(model, opt, batch);
    losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return losses;
}

Image sr_apply(const SrModel& model, const Image& img, const VesselnessParams& vp) {
  NoGradGuard guard;
  const SrSample s = make_sr_inference_sample(img, vp);
  const StackBatch b = to_batch(std::span<const FeatureStack>(&s.input, 1));
  Tensor y = model.net.forward(model.hybrid.forward(b, Mode::eval).hfi);
  Image out(y.dim(3), y.dim(2), ValueRange::byte);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::round(y.data()[i] * 255.0);
  out.clamp();
  return out;
}

}  // namespace tubuda
