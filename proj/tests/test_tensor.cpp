#include <doctest.h>

#include <cmath>

#include "gradcases.hpp"
#include "support.hpp"
#include "tubuda/error.hpp"
#include "tubuda/nn.hpp"
#include "tubuda/ops.hpp"
#include "tubuda/optim.hpp"

using namespace tubuda;

TEST_SUITE("tensor") {

TEST_CASE("construction invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, std::vector<double>(5)), InvalidArgument);
  const Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.dim(-1) == 4);
  CHECK(shape_str(t.shape()) == "[2,3,4]");
}

TEST_CASE("conv2d identity and sum kernels") {
  Rng rng(1);
  const Tensor x = test::random_tensor({2, 3, 4, 5}, rng, -1, 1, false);
  std::vector<double> eye(9, 0.0);
  for (int c = 0; c < 3; ++c) eye[c * 3 + c] = 1.0;
  const Tensor y = ops::conv2d(x, Tensor::from({3, 3, 1, 1}, eye));
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>(x.data().begin(), x.data().end()));

  const Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor s = ops::conv2d(ones, Tensor::full({1, 1, 3, 3}, 1.0));
  CHECK(s.shape() == Shape{1, 1, 1, 1});
  CHECK(s.item() == 9.0);
}

TEST_CASE("conv2d output extent and shape errors name both shapes") {
  const Tensor x = Tensor::zeros({1, 2, 7, 9});
  CHECK(ops::conv2d(x, Tensor::zeros({4, 2, 3, 3}), 2, 1).shape() == Shape{1, 4, 4, 5});
  try {
    ops::conv2d(x, Tensor::zeros({4, 3, 3, 3}));
    FAIL("expected a shape error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1,2,7,9]") != std::string::npos);
    CHECK(msg.find("[4,3,3,3]") != std::string::npos);
  }
}

TEST_CASE("max_pool2d values and tie-break") {
  const Tensor c = Tensor::full({1, 1, 4, 4}, 3.0);
  const Tensor pooled = ops::max_pool2d(c, 2, 2);
  for (double v : pooled.data()) CHECK(v == 3.0);
  CHECK(ops::max_pool2d(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2).item() == 4.0);

  Tensor tie = Tensor::from({1, 1, 2, 2}, {5, 5, 0, 0}, true);
  ops::max_pool2d(tie, 2, 2).backward();
  CHECK(std::vector<double>(tie.grad().begin(), tie.grad().end()) == std::vector<double>{1, 0, 0, 0});
}

TEST_CASE("non-finite values are not swallowed") {
  const double nan = std::nan("");
  const Tensor x = Tensor::from({1, 1, 2, 2}, {1.0, nan, -2.0, 0.5});
  CHECK(std::isnan(ops::relu(x).data()[1]));
  CHECK(ops::relu(x).data()[2] == 0.0);
  CHECK(std::isnan(ops::max_pool2d(x, 2, 2).item()));
  CHECK(std::isnan(ops::global_max_pool(x).item()));
  CHECK(std::isnan(ops::bce(ops::sigmoid(x), Tensor::zeros({1, 1, 2, 2})).item()));
}

TEST_CASE("pixel_shuffle, sigmoid and zero-variance batchnorm") {
  Rng rng(2);
  const Tensor x = test::random_tensor({2, 3, 2, 2}, rng, -1, 1, false);
  CHECK(ops::pixel_shuffle(x, 1).data()[5] == x.data()[5]);
  const Tensor ps = ops::pixel_shuffle(Tensor::from({1, 4, 1, 1}, {0, 1, 2, 3}), 2);
  CHECK(ps.shape() == Shape{1, 1, 2, 2});
  CHECK(std::vector<double>(ps.data().begin(), ps.data().end()) == std::vector<double>{0, 1, 2, 3});
  CHECK(ops::sigmoid(Tensor::scalar(0.0)).item() == 0.5);

  Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
  const Tensor flat = Tensor::full({3, 2, 2, 2}, 4.0);
  const Tensor y = ops::batchnorm(flat, Tensor::full({2}, 1.0), Tensor::zeros({2}), rm, rv, true);
  for (double v : y.data()) CHECK(v == 0.0);
  CHECK(rm.data()[0] == doctest::Approx(0.4));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  const Tensor s = ops::softmax(test::random_tensor({4, 7}, rng, -20, 20, false));
  for (int r = 0; r < 4; ++r) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) total += s.data()[r * 7 + j];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor(x).backward();
  CHECK(x.grad()[0] == 1.0);
  x.zero_grad();
  ops::add(x, x).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK_THROWS_AS(Tensor::zeros({2}, true).backward(), InvalidArgument);
}

TEST_CASE("grl contract") {
  Rng rng(4);
  for (double lambda : {0.0, 0.5, 1.0}) {
    Tensor x = test::random_tensor({3, 4}, rng);
    const Tensor y = ops::grl(x, lambda);
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>(x.data().begin(), x.data().end()));
    ops::sum(y).backward();
    for (double g : x.grad()) CHECK(g == -lambda * 1.0);
  }
}

TEST_CASE("no-grad guard builds no graph") {
  Tensor x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  const Tensor y = ops::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("primitive gradients match finite differences") {
  for (const auto& c : test::primitive_grad_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const test::GradCheck r = c.run(seed);
      INFO(c.name << " seed " << seed << " max rel " << r.max_rel);
      CHECK(r.checked > 0);
      CHECK(r.max_rel < 1e-4);
    }
  }
}

TEST_CASE("network gradients match finite differences") {
  for (const auto& c : test::network_grad_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const test::GradCheck r = c.run(seed);
      INFO(c.name << " seed " << seed << " max rel " << r.max_rel << " at leaf " << r.worst_leaf << "["
                  << r.worst_index << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric
                  << " checked " << r.checked << " skipped " << r.skipped);
      CHECK(r.max_rel < 1e-4);
      CHECK(r.skipped <= r.checked);
    }
  }
}

TEST_CASE("eval forward is pure") {
  Rng rng(5);
  ParamStore store;
  const Conv2d conv = make_conv(store, "c", 2, 3, 3, rng);
  const BatchNorm bn = make_batchnorm(store, "bn", 3);
  const Tensor x = test::random_tensor({2, 2, 5, 5}, rng, -1, 1, false);
  const Tensor a = bn(conv(x), Mode::eval), b = bn(conv(x), Mode::eval);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) == std::vector<double>(b.data().begin(), b.data().end()));
}

TEST_CASE("checkpoint round trip and mismatch errors") {
  Rng rng(6);
  ParamStore a;
  make_conv(a, "conv", 2, 3, 3, rng);
  make_batchnorm(a, "bn", 3);
  const auto path = std::filesystem::temp_directory_path() / "tubuda_ckpt_test" / "a.ckpt";
  a.save(path);

  Rng other(7);
  ParamStore b;
  make_conv(b, "conv", 2, 3, 3, other);
  make_batchnorm(b, "bn", 3);
  b.load(path);
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    CHECK(ea.name == eb.name);
    for (std::size_t k = 0; k < ea.tensor.numel(); ++k) {
      CHECK(eb.tensor.data()[k] == static_cast<double>(static_cast<float>(ea.tensor.data()[k])));
    }
  }
  ParamStore c;
  make_conv(c, "conv", 2, 4, 3, rng);
  CHECK_THROWS_AS(c.load(path), IoError);
  ParamStore d;
  d.add_param("x", {1}, {0.0});
  CHECK_THROWS_AS(d.add_param("x", {1}, {0.0}), InvalidArgument);
  CHECK_THROWS_AS(b.load(path.parent_path() / "missing.ckpt"), IoError);
}

TEST_CASE("adam first step, zero gradient and quadratic bowl") {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  {
    std::vector<double> w{1.0, -2.0}, g{0.0, 0.0}, m(2), v(2);
    adam_update(w, g, m, v, 1, cfg);
    CHECK(w == std::vector<double>{1.0, -2.0});
  }
  {
    std::vector<double> w{1.0, -2.0}, g{0.3, -5.0}, m(2), v(2);
    adam_update(w, g, m, v, 1, cfg);
    CHECK(w[0] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(-2.0 + cfg.lr).epsilon(1e-6));
  }
  {
    // f(w) = sum (w - c)^2
    const std::vector<double> c{0.7, -1.3, 2.0};
    std::vector<double> w{0.0, 0.0, 0.0}, g(3), m(3), v(3);
    OptimConfig bowl = cfg;
    bowl.lr = 0.05;
    int t = 0;
    for (; t < 500; ++t) {
      for (int i = 0; i < 3; ++i) g[i] = 2.0 * (w[i] - c[i]);
      adam_update(w, g, m, v, t + 1, bowl);
    }
    for (int i = 0; i < 3; ++i) CHECK(std::abs(w[i] - c[i]) < 1e-3);
  }
  OptimConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
