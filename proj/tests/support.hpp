#pragma once

#include <functional>
#include <vector>

#include "tubuda/image.hpp"
#include "tubuda/random.hpp"
#include "tubuda/tensor.hpp"

namespace tubuda::test {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true);
Image random_image(int w, int h, Rng& rng);

/// sum(y * w) for a fixed random w: a scalar whose gradient does not
/// vanish on outputs with constant sums (batch norm, softmax).
Tensor probe(const Tensor& y, std::uint64_t seed);

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  // Entries whose +-h evaluations crossed a kink of a piecewise op.
  std::size_t skipped = 0;
  // Worst entry: leaf index, element index, analytic and numeric values.
  std::size_t worst_leaf = 0, worst_index = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// Central finite differences (step h) against reverse-mode gradients for
/// up to `per_leaf` randomly chosen entries of every leaf. The relative
/// error of an entry is |a - n| / max(|a|, |n|, floor). Entries where either
/// shifted evaluation takes a different branch of a relu, max pool or clamp
/// than the unshifted one are skipped and the next candidate is tried.
GradCheck grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                     std::uint64_t seed, std::size_t per_leaf = 30, double h = 1e-5,
                     double floor = 1e-6);

}  // namespace tubuda::test
