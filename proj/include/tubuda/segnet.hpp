#pragma once

#include <vector>

#include "tubuda/hybrid.hpp"
#include "tubuda/nn.hpp"

namespace tubuda {

struct UNetConfig {
  int in_channels = 1;
  int base = 8;  ///< full preset 64
  int levels = 4;

  void validate() const;
  /// Channel count of the bottom feature map.
  int bottleneck_channels() const { return base << levels; }
};

struct UNetOutput {
  Tensor logits;      ///< [b, 1, H, W], membrane logit
  Tensor bottleneck;  ///< [b, base * 2^levels, H / 2^levels, W / 2^levels]
};

class UNet {
 public:
  UNet(const UNetConfig& cfg, Rng& rng);

  /// H and W must be divisible by 2^levels.
  UNetOutput forward(const Tensor& x, Mode mode) const;

  const UNetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct DoubleConv {
    Conv2d c1;
    BatchNorm b1;
    Conv2d c2;
    BatchNorm b2;
    Tensor operator()(const Tensor& x, Mode mode) const;
  };
  DoubleConv make_double(const std::string& name, int ci, int co, Rng& rng);

  UNetConfig cfg_;
  ParamStore params_;
  std::vector<DoubleConv> down_;  // levels + 1 entries, the last is the bottom
  std::vector<Conv2d> up_reduce_;
  std::vector<DoubleConv> up_;
  Conv2d head_;
};

/// Embedded-Gaussian non-local block with a residual connection. The output
/// projection starts at zero, so a fresh block is the identity.
class NonLocalBlock {
 public:
  NonLocalBlock(ParamStore& store, const std::string& name, int channels, Rng& rng);

  Tensor forward(const Tensor& x) const;
  /// Row-stochastic attention matrix [b, hw, hw].
  Tensor attention(const Tensor& x) const;

 private:
  Conv2d theta_, phi_, g_, out_;
};

struct VectorTriple {
  Tensor v1, v2, v3;
};

/// Global-average-pooled feature map through three bias-free projections.
class VectorExtractor {
 public:
  VectorExtractor(ParamStore& store, const std::string& name, int channels, int d, Rng& rng);
  VectorTriple forward(const Tensor& x) const;

 private:
  Linear p1_, p2_, p3_;
};

/// Residuals with squared norm below this (norm below 1e-8) are degenerate.
inline constexpr double kGramSchmidtMinSquaredNorm = 1e-16;

struct GramSchmidtResult {
  Tensor u1, u2, u3;
  /// Per batch row: whether u2 / u3 fell below the degeneracy threshold
  /// (left as the raw residual; later projections onto it are skipped).
  std::vector<bool> u2_degenerate, u3_degenerate;
};

/// Classical unnormalised Gram-Schmidt per row of [b, d] inputs.
GramSchmidtResult gram_schmidt(const Tensor& v1, const Tensor& v2, const Tensor& v3);

/// linear d -> 1, batch norm, sigmoid.
struct DomainHead {
  Linear linear;
  BatchNorm bn;
  Tensor operator()(const Tensor& u, Mode mode) const;
};

DomainHead make_domain_head(ParamStore& store, const std::string& name, int d, Rng& rng);

struct DiscriminatorConfig {
  int channels = 128;  ///< channels of the incoming feature map
  int d = 64;          ///< full preset 256
  bool nonlocal = true;
  /// Three orthogonalised vectors with three heads; false gives one plain
  /// head on one pooled projection.
  bool orthogonal_heads = true;

  void validate() const;
};

struct DiscriminatorOutput {
  std::vector<Tensor> probs;  ///< one [b, 1] domain probability per head
  std::vector<bool> degenerate;  ///< per row: any degenerate Gram-Schmidt residual
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

  DiscriminatorOutput forward(const Tensor& features, Mode mode) const;
  int head_count() const { return cfg_.orthogonal_heads ? 3 : 1; }

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  DiscriminatorConfig cfg_;
  ParamStore params_;
  std::unique_ptr<NonLocalBlock> nonlocal_;
  std::unique_ptr<VectorExtractor> vectors_;
  Linear plain_;
  std::vector<DomainHead> heads_;
};

}  // namespace tubuda
