#pragma once

#include <array>

#include <nlohmann/json.hpp>

#include "tubuda/tensor.hpp"

namespace tubuda {

/// mu[0..2] weight the source domain losses, mu[3..5] the target ones.
struct LossWeights {
  std::array<double, 6> mu{0.03, 0.03, 0.03, 0.03, 0.03, 0.03};

  void validate() const;
  bool all_zero() const;
};

/// Scalar inputs to the composition.
struct LossTerms {
  double seg = 0.0;
  std::array<double, 3> source{};
  std::array<double, 3> target{};
};

struct LossReport {
  int step = 0;
  double seg = 0.0;
  std::array<double, 3> source{};
  std::array<double, 3> target{};
  double ls = 0.0;
  double lt = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// ls = seg + ((mu1 s1 + mu2 s2) + mu3 s3), lt = (mu4 t1 + mu5 t2) + mu6 t3,
/// total = ls + lt. The reversal of the domain terms happens on the feature
/// path, so the composition itself is a plain weighted sum. Throws
/// NumericError naming the first non-finite component.
LossReport compose_losses(const LossTerms& terms, const LossWeights& w);

struct GraphLoss {
  Tensor ls, lt, total;
  LossReport report;
};

/// Graph version with the same operation order; undefined domain tensors
/// count as zero.
GraphLoss compose_losses(const Tensor& seg, const std::array<Tensor, 3>& source,
                         const std::array<Tensor, 3>& target, const LossWeights& w);

}  // namespace tubuda
