#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tubuda/ops.hpp"

namespace tubuda::test {

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h, ValueRange::byte);
  for (double& v : img.data()) v = static_cast<double>(rng.below(256));
  return img;
}

Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng, -1.0, 1.0, false)));
}

GradCheck grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                     std::uint64_t seed, std::size_t per_leaf, double h, double floor) {
  for (Tensor t : leaves) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : leaves) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  GradCheck out;
  Rng rng(seed);
  NoGradGuard guard;
  ops::BranchTrace trace;
  f();
  const std::uint64_t base = trace.digest();
  auto eval = [&](std::uint64_t& digest) {
    trace.reset();
    const double v = f().item();
    digest = trace.digest();
    return v;
  };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor t = leaves[li];
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    std::size_t accepted = 0;
    for (std::size_t i : idx) {
      if (accepted == per_leaf) break;
      double& x = t.data()[i];
      const double x0 = x;
      std::uint64_t dp = 0, dm = 0;
      x = x0 + h;
      const double fp = eval(dp);
      x = x0 - h;
      const double fm = eval(dm);
      x = x0;
      if (dp != base || dm != base) {
        ++out.skipped;
        continue;
      }
      ++accepted;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst_leaf = li;
        out.worst_index = i;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
      ++out.checked;
    }
  }
  return out;
}

}  // namespace tubuda::test
