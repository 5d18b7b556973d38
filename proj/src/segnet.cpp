#include "tubuda/segnet.hpp"

#include <string>

#include "tubuda/error.hpp"
#include "tubuda/ops.hpp"

namespace tubuda {

void UNetConfig::validate() const {
  if (in_channels < 1 || base < 1 || levels < 1) throw ConfigError("unet in_channels, base, levels must be >= 1");
}

Tensor UNet::DoubleConv::operator()(const Tensor& x, Mode mode) const {
  Tensor h = ops::relu(b1(c1(x), mode));
  return ops::relu(b2(c2(h), mode));
}

UNet::DoubleConv UNet::make_double(const std::string& name, int ci, int co, Rng& rng) {
  return {make_conv(params_, name + ".conv1", ci, co, 3, rng, false), make_batchnorm(params_, name + ".bn1", co),
          make_conv(params_, name + ".conv2", co, co, 3, rng, false), make_batchnorm(params_, name + ".bn2", co)};
}

UNet::UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int ci = cfg_.in_channels;
  for (int l = 0; l <= cfg_.levels; ++l) {
    const int co = cfg_.base << l;
    down_.push_back(make_double("down" + std::to_string(l), ci, co, rng));
    ci = co;
  }
  for (int l = cfg_.levels - 1; l >= 0; --l) {
    const int co = cfg_.base << l;
    up_reduce_.push_back(make_conv(params_, "up" + std::to_string(l) + ".reduce", 2 * co, co, 1, rng));
    up_.push_back(make_double("up" + std::to_string(l), 2 * co, co, rng));
  }
  head_ = make_conv(params_, "head", cfg_.base, 1, 1, rng);
}

UNetOutput UNet::forward(const Tensor& x, Mode mode) const {
  const int div = 1 << cfg_.levels;
  if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels || x.dim(2) % div != 0 || x.dim(3) % div != 0) {
    throw InvalidArgument("unet_forward: expected [b," + std::to_string(cfg_.in_channels) +
                          ",H,W] with H, W divisible by " + std::to_string(div) + ", got " +
                          shape_str(x.shape()));
  }
  std::vector<Tensor> skips;
  Tensor h = x;
  for (int l = 0; l < cfg_.levels; ++l) {
    h = down_[l](h, mode);
    skips.push_back(h);
    h = ops::max_pool2d(h, 2, 2);
  }
  h = down_[cfg_.levels](h, mode);
  const Tensor bottom = h;
  for (int i = 0; i < cfg_.levels; ++i) {
    Tensor up = up_reduce_[i](ops::upsample_nearest(h, 2));
    h = up_[i](ops::concat({skips[cfg_.levels - 1 - i], up}, 1), mode);
  }
  return {head_(h), bottom};
}

NonLocalBlock::NonLocalBlock(ParamStore& store, const std::string& name, int channels, Rng& rng) {
  const int inner = std::max(1, channels / 2);
  theta_ = make_conv(store, name + ".theta", channels, inner, 1, rng);
  phi_ = make_conv(store, name + ".phi", channels, inner, 1, rng);
  g_ = make_conv(store, name + ".g", channels, inner, 1, rng);
  out_ = make_conv(store, name + ".out", inner, channels, 1, rng);
  for (double& v : out_.weight.data()) v = 0.0;
  for (double& v : out_.bias.data()) v = 0.0;
}

Tensor NonLocalBlock::attention(const Tensor& x) const {
  const int b = x.dim(0), n = x.dim(2) * x.dim(3);
  Tensor t = theta_(x);
  Tensor p = phi_(x);
  t = ops::reshape(t, {b, t.dim(1), n});
  p = ops::reshape(p, {b, p.dim(1), n});
  return ops::softmax(ops::bmm(ops::transpose_last2(t), p));
}

Tensor NonLocalBlock::forward(const Tensor& x) const {
  if (x.ndim() != 4) throw InvalidArgument("nonlocal_block: expected [b,C,h,w], got " + shape_str(x.shape()));
  const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor g = g_(x);
  const int inner = g.dim(1);
  g = ops::reshape(g, {b, inner, h * w});
  Tensor y = ops::bmm(attention(x), ops::transpose_last2(g));  // [b, hw, inner]
  y = ops::reshape(ops::transpose_last2(y), {b, inner, h, w});
  return ops::add(x, out_(y));
}

VectorExtractor::VectorExtractor(ParamStore& store, const std::string& name, int channels, int d, Rng& rng)
    : p1_(make_linear(store, name + ".v1", channels, d, rng, false)),
      p2_(make_linear(store, name + ".v2", channels, d, rng, false)),
      p3_(make_linear(store, name + ".v3", channels, d, rng, false)) {}

VectorTriple VectorExtractor::forward(const Tensor& x) const {
  Tensor pooled = ops::global_avg_pool(x);
  return {p1_(pooled), p2_(pooled), p3_(pooled)};
}

namespace {

std::vector<bool> below_threshold(const Tensor& sq_norm) {
  std::vector<bool> out;
  for (double v : sq_norm.data()) out.push_back(!(v >= kGramSchmidtMinSquaredNorm));
  return out;
}

Tensor project_out(const Tensor& v, const Tensor& u, const Tensor& uu) {
  Tensor coef = ops::safe_ratio(ops::rowdot(v, u), uu, kGramSchmidtMinSquaredNorm);
  return ops::sub(v, ops::row_scale(u, coef));
}

}  // namespace

GramSchmidtResult gram_schmidt(const Tensor& v1, const Tensor& v2, const Tensor& v3) {
  if (v1.ndim() != 2 || v1.shape() != v2.shape() || v1.shape() != v3.shape()) {
    throw InvalidArgument("gram_schmidt: expected three equal [b,d] inputs, got " + shape_str(v1.shape()) +
                          ", " + shape_str(v2.shape()) + ", " + shape_str(v3.shape()));
  }
  if (v1.dim(1) < 3) throw InvalidArgument("gram_schmidt: d must be >= 3");
  GramSchmidtResult r;
  r.u1 = v1;
  const Tensor n1 = ops::rowdot(r.u1, r.u1);
  r.u2 = project_out(v2, r.u1, n1);
  const Tensor n2 = ops::rowdot(r.u2, r.u2);
  r.u3 = project_out(project_out(v3, r.u1, n1), r.u2, n2);
  r.u2_degenerate = below_threshold(n2);
  r.u3_degenerate = below_threshold(ops::rowdot(r.u3, r.u3));
  return r;
}

Tensor DomainHead::operator()(const Tensor& u, Mode mode) const {
  return ops::sigmoid(bn(linear(u), mode));
}

DomainHead make_domain_head(ParamStore& store, const std::string& name, int d, Rng& rng) {
  return {make_linear(store, name + ".linear", d, 1, rng), make_batchnorm(store, name + ".bn", 1)};
}

void DiscriminatorConfig::validate() const {
  if (channels < 1) throw ConfigError("discriminator channels must be >= 1");
  if (d < 3) throw ConfigError("discriminator d must be >= 3");
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.nonlocal) nonlocal_ = std::make_unique<NonLocalBlock>(params_, "nonlocal", cfg_.channels, rng);
  if (cfg_.orthogonal_heads) {
    vectors_ = std::make_unique<VectorExtractor>(params_, "vectors", cfg_.channels, cfg_.d, rng);
  } else {
    plain_ = make_linear(params_, "plain", cfg_.channels, cfg_.d, rng, false);
  }
  for (int k = 0; k < head_count(); ++k) {
    heads_.push_back(make_domain_head(params_, "head" + std::to_string(k + 1), cfg_.d, rng));
  }
}

DiscriminatorOutput Discriminator::forward(const Tensor& features, Mode mode) const {
  if (features.ndim() != 4 || features.dim(1) != cfg_.channels) {
    throw InvalidArgument("discriminator: expected [b," + std::to_string(cfg_.channels) + ",h,w], got " +
                          shape_str(features.shape()));
  }
  Tensor x = nonlocal_ ? nonlocal_->forward(features) : features;
  DiscriminatorOutput out;
  if (!cfg_.orthogonal_heads) {
    out.probs.push_back(heads_[0](plain_(ops::global_avg_pool(x)), mode));
    out.degenerate.assign(x.dim(0), false);
    return out;
  }
  const VectorTriple v = vectors_->forward(x);
  const GramSchmidtResult gs = gram_schmidt(v.v1, v.v2, v.v3);
  out.probs = {heads_[0](gs.u1, mode), heads_[1](gs.u2, mode), heads_[2](gs.u3, mode)};
  for (int i = 0; i < x.dim(0); ++i) out.degenerate.push_back(gs.u2_degenerate[i] || gs.u3_degenerate[i]);
  return out;
}

}  // namespace tubuda
