#include <doctest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "tubuda/error.hpp"
#include "tubuda/losses.hpp"
#include "tubuda/ops.hpp"

using namespace tubuda;

namespace {

LossTerms random_terms(Rng& rng) {
  LossTerms t;
  t.seg = rng.uniform(0.0, 2.0);
  for (double& v : t.source) v = rng.uniform(0.0, 2.0);
  for (double& v : t.target) v = rng.uniform(0.0, 2.0);
  return t;
}

LossWeights random_weights(Rng& rng) {
  LossWeights w;
  for (double& m : w.mu) m = rng.uniform(0.0, 0.1);
  return w;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("bce anchors") {
  const double ln2 = std::log(2.0);
  CHECK(ops::bce(Tensor::full({3, 1}, 0.5), Tensor::full({3, 1}, 1.0)).item() == doctest::Approx(ln2).epsilon(1e-15));
  CHECK(ops::bce(Tensor::full({3, 1}, 0.5), Tensor::zeros({3, 1})).item() == doctest::Approx(ln2).epsilon(1e-15));
  CHECK(ops::bce(Tensor::full({2, 2}, 1e-9), Tensor::zeros({2, 2})).item() <= 1e-6);
  CHECK(ops::bce(Tensor::full({2, 2}, 1.0 - 1e-9), Tensor::full({2, 2}, 1.0)).item() <= 1e-6);
  CHECK(std::isfinite(ops::bce(Tensor::zeros({1, 1}), Tensor::full({1, 1}, 1.0)).item()));
}

TEST_CASE("bce matches a scalar loop") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = test::random_tensor({4, 1, 3, 3}, rng, 0.0, 1.0, false);
    Tensor t = Tensor::zeros({4, 1, 3, 3});
    for (double& v : t.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double q = std::min(std::max(p.data()[i], 1e-7), 1.0 - 1e-7);
      ref += t.data()[i] > 0.5 ? -std::log(q) : -std::log(1.0 - q);
    }
    ref /= static_cast<double>(p.numel());
    CHECK(std::abs(ops::bce(p, t).item() - ref) < 1e-12);
  }
}

TEST_CASE("weights default and validation") {
  LossWeights w;
  for (double m : w.mu) CHECK(m == 0.03);
  CHECK_FALSE(w.all_zero());
  w.mu[4] = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w.mu.fill(0.0);
  CHECK(w.all_zero());
}

TEST_CASE("zero weights collapse to the segmentation loss") {
  Rng rng(2);
  LossWeights w;
  w.mu.fill(0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const LossTerms t = random_terms(rng);
    const LossReport r = compose_losses(t, w);
    CHECK(r.total == t.seg);
    CHECK(r.ls == t.seg);
    CHECK(r.lt == 0.0);
  }
}

TEST_CASE("worked example with every domain loss at ln 2") {
  const double ln2 = std::log(2.0);
  LossTerms t;
  t.seg = 1.0;
  t.source.fill(ln2);
  t.target.fill(ln2);
  const LossReport r = compose_losses(t, LossWeights{});
  CHECK(std::abs(r.total - (1.0 + 6.0 * 0.03 * ln2)) < 1e-12);
}

TEST_CASE("total splits exactly into source and target parts") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const LossReport r = compose_losses(random_terms(rng), random_weights(rng));
    CHECK(r.total == r.ls + r.lt);
  }
}

TEST_CASE("composition is linear in the weights") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const LossTerms t = random_terms(rng);
    const LossWeights a = random_weights(rng), b = random_weights(rng);
    LossWeights sum;
    for (int k = 0; k < 6; ++k) sum.mu[k] = a.mu[k] + b.mu[k];
    const double da = compose_losses(t, a).total - t.seg;
    const double db = compose_losses(t, b).total - t.seg;
    CHECK(std::abs(compose_losses(t, sum).total - t.seg - (da + db)) < 1e-12);
    for (int k = 0; k < 6; ++k) {
      LossWeights single;
      single.mu.fill(0.0);
      single.mu[k] = a.mu[k];
      const double v = k < 3 ? t.source[k] : t.target[k - 3];
      CHECK(std::abs(compose_losses(t, single).total - t.seg - a.mu[k] * v) < 1e-15);
    }
  }
}

TEST_CASE("non-finite components abort with their name") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto component = [](const LossTerms& t) -> std::string {
    try {
      compose_losses(t, LossWeights{});
    } catch (const NumericError& e) {
      return e.component();
    }
    return "";
  };
  LossTerms t;
  t.seg = nan;
  CHECK(component(t) == "seg");
  t.seg = 1.0;
  t.source[2] = std::numeric_limits<double>::infinity();
  CHECK(component(t) == "source_d3");
  t.source[2] = 0.0;
  t.target[1] = nan;
  CHECK(component(t) == "target_d2");
  t.target[1] = 0.0;
  CHECK(component(t).empty());
}

TEST_CASE("graph composition agrees with the scalar one") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const LossTerms t = random_terms(rng);
    const LossWeights w = random_weights(rng);
    const Tensor seg = Tensor::scalar(t.seg, true);
    std::array<Tensor, 3> s, g;
    for (int k = 0; k < 3; ++k) {
      s[k] = Tensor::scalar(t.source[k], true);
      g[k] = Tensor::scalar(t.target[k], true);
    }
    const GraphLoss gl = compose_losses(seg, s, g, w);
    const LossReport r = compose_losses(t, w);
    CHECK(gl.total.item() == r.total);
    CHECK(gl.ls.item() == r.ls);
    CHECK(gl.lt.item() == r.lt);
    CHECK(gl.report.total == r.total);
    gl.total.backward();
    CHECK(seg.grad()[0] == 1.0);
    for (int k = 0; k < 3; ++k) {
      CHECK(s[k].grad()[0] == w.mu[k]);
      CHECK(g[k].grad()[0] == w.mu[k + 3]);
    }
  }
}

TEST_CASE("graph composition treats missing domain terms as zero") {
  const GraphLoss g = compose_losses(Tensor::scalar(0.7), {}, {}, LossWeights{});
  CHECK(g.total.item() == 0.7);
  CHECK(g.report.lt == 0.0);
  const nlohmann::json j = g.report.to_json();
  CHECK(j.at("total").get<double>() == 0.7);
  CHECK(j.at("source_d").size() == 3);
  CHECK(j.at("target_d").size() == 3);
}

}  // TEST_SUITE
