#include "gradcases.hpp"

#include <cmath>

#include "tubuda/hybrid.hpp"
#include "tubuda/ops.hpp"
#include "tubuda/segnet.hpp"
#include "tubuda/srnet.hpp"

namespace tubuda::test {

namespace {

// Values bounded away from zero, for ops with a kink at 0.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  for (double& v : t.data()) v = rng.below(2) ? v : -v;
  return t;
}


GradCase unary_case(std::string name, Shape shape, const std::function<Tensor(const Tensor&)>& op,
                    bool kink = false) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor x = kink ? away_from_zero(shape, rng) : random_tensor(shape, rng);
            return grad_check([&] { return probe(op(x), seed + 1); }, {x}, seed);
          }};
}

GradCase binary_case(std::string name, Shape sa, Shape sb,
                     const std::function<Tensor(const Tensor&, const Tensor&)>& op) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            Tensor a = random_tensor(sa, rng), b = random_tensor(sb, rng);
            return grad_check([&] { return probe(op(a, b), seed + 1); }, {a, b}, seed);
          }};
}

std::vector<GradCase> build_primitives() {
  std::vector<GradCase> c;
  c.push_back(binary_case("add", {3, 4}, {3, 4}, ops::add));
  c.push_back(binary_case("sub", {3, 4}, {3, 4}, ops::sub));
  c.push_back(binary_case("mul", {2, 3, 2}, {2, 3, 2}, ops::mul));
  c.push_back(unary_case("scale", {5}, [](const Tensor& x) { return ops::scale(x, -1.7); }));
  c.push_back(unary_case("add_scalar", {5}, [](const Tensor& x) { return ops::add_scalar(x, 0.3); }));
  c.push_back(unary_case("relu", {4, 5}, ops::relu, true));
  c.push_back(unary_case("sigmoid", {4, 5}, ops::sigmoid));
  c.push_back(unary_case("abs", {4, 5}, ops::abs, true));
  c.push_back(binary_case("add_bias_2d", {3, 4}, {4}, ops::add_bias));
  c.push_back(binary_case("add_bias_4d", {2, 3, 2, 2}, {3}, ops::add_bias));
  c.push_back(unary_case("sum", {3, 3}, [](const Tensor& x) { return ops::sum(ops::mul(x, x)); }));
  c.push_back(unary_case("mean", {3, 3}, [](const Tensor& x) { return ops::mean(ops::mul(x, x)); }));
  c.push_back(unary_case("reshape", {2, 6}, [](const Tensor& x) { return ops::reshape(x, {3, 4}); }));
  c.push_back(binary_case("concat", {2, 3, 2, 2}, {2, 1, 2, 2},
                          [](const Tensor& a, const Tensor& b) { return ops::concat({a, b, a}, 1); }));
  c.push_back(unary_case("slice", {5, 3}, [](const Tensor& x) { return ops::slice(x, 0, 1, 4); }));
  c.push_back(unary_case("transpose_last2", {2, 3, 4}, ops::transpose_last2));
  c.push_back(binary_case("bmm", {2, 3, 4}, {2, 4, 5}, ops::bmm));
  c.push_back(binary_case("matmul", {3, 4}, {4, 2}, ops::matmul));
  c.push_back(binary_case("linear", {3, 4}, {5, 4}, ops::linear));
  c.push_back(binary_case("conv2d_3x3_pad1", {2, 3, 5, 5}, {4, 3, 3, 3},
                          [](const Tensor& x, const Tensor& k) { return ops::conv2d(x, k, 1, 1); }));
  c.push_back(binary_case("conv2d_stride2", {1, 2, 7, 6}, {3, 2, 3, 3},
                          [](const Tensor& x, const Tensor& k) { return ops::conv2d(x, k, 2, 0); }));
  c.push_back(binary_case("conv2d_5x5_pad2", {1, 2, 6, 6}, {2, 2, 5, 5},
                          [](const Tensor& x, const Tensor& k) { return ops::conv2d(x, k, 1, 2); }));
  c.push_back(binary_case("conv2d_1x1", {2, 3, 4, 4}, {2, 3, 1, 1},
                          [](const Tensor& x, const Tensor& k) { return ops::conv2d(x, k, 1, 0); }));
  c.push_back(unary_case("max_pool2d", {2, 2, 6, 6}, [](const Tensor& x) { return ops::max_pool2d(x, 2, 2); }));
  c.push_back(unary_case("global_max_pool", {2, 3, 4, 4}, ops::global_max_pool));
  c.push_back(unary_case("global_avg_pool", {2, 3, 4, 4}, ops::global_avg_pool));
  c.push_back(unary_case("upsample_nearest", {1, 2, 3, 3}, [](const Tensor& x) { return ops::upsample_nearest(x, 2); }));
  c.push_back(unary_case("pixel_shuffle", {2, 8, 2, 3}, [](const Tensor& x) { return ops::pixel_shuffle(x, 2); }));
  c.push_back(unary_case("softmax", {3, 5}, ops::softmax));
  c.push_back({"batchnorm_train", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor x = random_tensor({3, 2, 3, 3}, rng);
                 Tensor g = random_tensor({2}, rng, 0.5, 1.5), b = random_tensor({2}, rng);
                 Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
                 return grad_check([&] { return probe(ops::batchnorm(x, g, b, rm, rv, true), seed + 1); },
                                   {x, g, b}, seed);
               }});
  c.push_back({"batchnorm_eval", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor x = random_tensor({4, 3}, rng);
                 Tensor g = random_tensor({3}, rng, 0.5, 1.5), b = random_tensor({3}, rng);
                 Tensor rm = random_tensor({3}, rng, -0.5, 0.5, false);
                 Tensor rv = random_tensor({3}, rng, 0.5, 2.0, false);
                 return grad_check([&] { return probe(ops::batchnorm(x, g, b, rm, rv, false), seed + 1); },
                                   {x, g, b}, seed);
               }});
  c.push_back(binary_case("rowdot", {3, 5}, {3, 5}, ops::rowdot));
  c.push_back(binary_case("row_scale", {3, 5}, {3, 1}, ops::row_scale));
  c.push_back({"safe_ratio", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor n = random_tensor({4, 1}, rng);
                 Tensor d = random_tensor({4, 1}, rng, 0.5, 2.0);
                 return grad_check([&] { return probe(ops::safe_ratio(n, d, 1e-16), seed + 1); }, {n, d}, seed);
               }});
  c.push_back({"l1_loss", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor p = away_from_zero({2, 1, 3, 3}, rng);
                 Tensor t = Tensor::zeros({2, 1, 3, 3});
                 return grad_check([&] { return ops::l1_loss(p, t); }, {p}, seed);
               }});
  c.push_back({"bce", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor p = random_tensor({6, 1}, rng, 0.05, 0.95);
                 std::vector<double> tv(6);
                 for (double& v : tv) v = static_cast<double>(rng.below(2));
                 Tensor t = Tensor::from({6, 1}, tv);
                 return grad_check([&] { return ops::bce(p, t); }, {p}, seed);
               }});
  c.push_back({"compose_hybrid", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tensor f = random_tensor({2, 4, 3, 3}, rng, 0.0, 255.0);
                 Tensor img = random_tensor({2, 1, 3, 3}, rng, 0.0, 255.0);
                 Tensor a = random_tensor({2, 4}, rng, 0.0, 1.0);
                 return grad_check([&] { return probe(compose_hybrid(f, img, a, 0.5), seed + 1); },
                                   {f, img, a}, seed);
               }});
  return c;
}

std::vector<Tensor> trainable(const ParamStore& s) { return s.trainable(); }

std::vector<GradCase> build_networks() {
  std::vector<GradCase> c;
  c.push_back({"feature_weight_module", [](std::uint64_t seed) {
                 Rng rng(seed);
                 HybridConfig cfg;
                 FeatureWeightModule m(cfg, rng);
                 Tensor x = random_tensor({2, cfg.n + 1, 16, 16}, rng, 0.0, 1.0);
                 auto leaves = trainable(m.params());
                 leaves.push_back(x);
                 return grad_check([&] { return probe(m.predict_weights(x, Mode::train), seed + 1); }, leaves,
                                   seed, 8);
               }});
  c.push_back({"sr_net_2_blocks", [](std::uint64_t seed) {
                 Rng rng(seed);
                 SrConfig cfg;
                 cfg.n_blocks = 2;
                 SrNet net(cfg, rng);
                 Tensor x = random_tensor({1, 1, 6, 6}, rng, 0.0, 1.0);
                 auto leaves = trainable(net.params());
                 leaves.push_back(x);
                 return grad_check([&] { return probe(net.forward(x), seed + 1); }, leaves, seed, 6);
               }});
  c.push_back({"mini_unet", [](std::uint64_t seed) {
                 Rng rng(seed);
                 UNetConfig cfg;
                 cfg.base = 2;
                 UNet net(cfg, rng);
                 Tensor x = random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
                 auto leaves = trainable(net.params());
                 leaves.push_back(x);
                 return grad_check(
                     [&] {
                       const UNetOutput o = net.forward(x, Mode::train);
                       return ops::add(probe(o.logits, seed + 1), probe(o.bottleneck, seed + 2));
                     },
                     leaves, seed, 6);
               }});
  c.push_back({"discriminator", [](std::uint64_t seed) {
                 Rng rng(seed);
                 DiscriminatorConfig cfg;
                 cfg.channels = 6;
                 cfg.d = 5;
                 Discriminator d(cfg, rng);
                 // Give the non-local output projection non-zero weights so
                 // every branch carries gradient.
                 for (const auto& e : d.params().entries()) {
                   if (e.name.rfind("nonlocal.out", 0) == 0) {
                     Tensor t = e.tensor;
                     for (double& v : t.data()) v = rng.uniform(-0.5, 0.5);
                   }
                 }
                 Tensor x = random_tensor({4, 6, 2, 2}, rng);
                 auto leaves = trainable(d.params());
                 leaves.push_back(x);
                 const Tensor labels = Tensor::from({4, 1}, {0, 0, 1, 1});
                 return grad_check(
                     [&] {
                       const DiscriminatorOutput o = d.forward(x, Mode::train);
                       Tensor total = ops::bce(o.probs[0], labels);
                       for (std::size_t k = 1; k < o.probs.size(); ++k) total = ops::add(total, ops::bce(o.probs[k], labels));
                       return total;
                     },
                     leaves, seed, 8);
               }});
  return c;
}

}  // namespace

const std::vector<GradCase>& primitive_grad_cases() {
  static const std::vector<GradCase> cases = build_primitives();
  return cases;
}

const std::vector<GradCase>& network_grad_cases() {
  static const std::vector<GradCase> cases = build_networks();
  return cases;
}

}  // namespace tubuda::test
