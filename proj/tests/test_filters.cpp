#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "tubuda/error.hpp"
#include "tubuda/filters.hpp"
#include "tubuda/imgio.hpp"

using namespace tubuda;
using test::ridge;

namespace {

double variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("filters") {

TEST_CASE("parameter validation") {
  VesselnessParams p;
  CHECK_NOTHROW(p.validate());
  p.scales = {};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.scales = {2.0, 1.0};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = {};
  p.jerman_tau = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = {};
  p.frangi_b = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  CHECK_THROWS_AS(gaussian_hessian(Image(8, 8), 0.4), InvalidArgument);
}

TEST_CASE("constant images give exactly zero responses") {
  const Image c(24, 20, ValueRange::byte, 137.0);
  for (double s : {0.5, 1.0, 2.5}) {
    const HessianField h = gaussian_hessian(c, s);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(h.xx[i] == 0.0);
      CHECK(h.xy[i] == 0.0);
      CHECK(h.yy[i] == 0.0);
    }
  }
  const FeatureStack st = extract_stack(c, {});
  CHECK(st.n() == kFeatureCount);
  for (const auto& f : st.features) {
    for (double v : f.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("hessian of a quadratic") {
  // I = x^2 / 16; smoothing keeps the curvature 2/16, scaled by sigma^2.
  // Truncating the kernels at 4 sigma costs under 1% of the value.
  const int w = 64, h = 24;
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(x, y) = x * x / 16.0;
  }
  for (double s : {1.0, 2.0}) {
    const HessianField f = gaussian_hessian(img, s);
    for (int y = 0; y < h; ++y) {
      for (int x = 12; x < 52; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        CHECK(f.xx[i] == doctest::Approx(2.0 / 16.0 * s * s).epsilon(1e-2));
        CHECK(f.xy[i] == 0.0);
        CHECK(f.yy[i] == 0.0);
      }
    }
  }
}

TEST_CASE("mirror-symmetric input gives antisymmetric Hxy") {
  Rng rng(2);
  const int w = 17, h = 16;
  Image img(w, h);
  for (int y = 0; y < h / 2; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = static_cast<double>(rng.below(256));
      img.at(x, h - 1 - y) = img.at(x, y);
    }
  }
  const HessianField f = gaussian_hessian(img, 1.5);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      CHECK(f.xy[static_cast<std::size_t>(y) * w + x] == -f.xy[static_cast<std::size_t>(h - 1 - y) * w + x]);
    }
  }
}

TEST_CASE("closed-form eigenvalues") {
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    const double xx = rng.uniform(-5, 5), xy = rng.uniform(-5, 5), yy = rng.uniform(-5, 5);
    const Eigen2 e = hessian_eigenvalues(xx, xy, yy);
    CHECK(std::abs(e.l1) <= std::abs(e.l2));
    CHECK(e.l1 + e.l2 == doctest::Approx(xx + yy).epsilon(1e-12).scale(10));
    CHECK(e.l1 * e.l2 == doctest::Approx(xx * yy - xy * xy).epsilon(1e-10).scale(10));
  }
}

TEST_CASE("frangi localises a dark ridge centreline") {
  const Image img = ridge(48, 40, 20.0, 2.0, 120.0, true);
  const std::vector<double> r = frangi_response(img, {});
  for (int x = 4; x < 44; ++x) {
    int best = 0;
    for (int y = 1; y < 40; ++y) {
      if (r[static_cast<std::size_t>(y) * 48 + x] > r[static_cast<std::size_t>(best) * 48 + x]) best = y;
    }
    CHECK(std::abs(best - 20) <= 1);
  }
}

TEST_CASE("bright ridge under dark-on-bright polarity is suppressed") {
  const Image img = ridge(32, 32, 16.0, 2.0, 120.0, false);
  const std::vector<double> fr = frangi_response(img, {});
  const std::vector<double> jr = jerman_response(img, {});
  for (int x = 0; x < 32; ++x) {
    CHECK(fr[16 * 32 + x] == 0.0);
    CHECK(jr[16 * 32 + x] == 0.0);
  }
  VesselnessParams bright;
  bright.polarity = Polarity::bright_on_dark;
  CHECK(frangi_response(img, bright)[16 * 32 + 10] > 0.0);
}

TEST_CASE("jerman plateau sits on the ridge and is flatter than frangi") {
  const Image img = ridge(48, 40, 20.0, 2.0, 120.0, true);
  const Image fj = jerman(img, {});
  const Image ff = frangi(img, {});
  std::vector<double> jband, fband;
  for (int x = 4; x < 44; ++x) {
    double top = 0.0;
    for (int y = 0; y < 40; ++y) top = std::max(top, fj.at(x, y));
    CHECK(top > 0.0);
    // Centre of the maximal plateau.
    int lo = -1, hi = -1;
    for (int y = 0; y < 40; ++y) {
      if (fj.at(x, y) == top) {
        if (lo < 0) lo = y;
        hi = y;
      }
    }
    CHECK(std::abs((lo + hi) / 2.0 - 20.0) <= 1.0);
    for (int y = 18; y <= 22; ++y) {
      jband.push_back(fj.at(x, y));
      fband.push_back(ff.at(x, y));
    }
  }
  CHECK(variance(jband) < variance(fband));
}

TEST_CASE("jerman with tau = 1 stays bounded") {
  Rng rng(12);
  const Image img = test::random_image(24, 24, rng);
  VesselnessParams p;
  p.jerman_tau = 1.0;
  for (double v : jerman_response(img, p)) {
    CHECK(std::isfinite(v));
    CHECK(v <= 1.0);
    CHECK(v >= 0.0);
  }
}

TEST_CASE("edge operators on a vertical step") {
  Image step(8, 6);
  for (int y = 0; y < 6; ++y) {
    for (int x = 4; x < 8; ++x) step.at(x, y) = 255.0;
  }
  const Gradient s = sobel_gradient(step), p = prewitt_gradient(step);
  for (int y = 0; y < 6; ++y) {
    for (int x : {3, 4}) {
      const std::size_t i = static_cast<std::size_t>(y) * 8 + x;
      CHECK(s.gx[i] == 4.0 * 255.0);
      CHECK(p.gx[i] == 3.0 * 255.0);
      CHECK(s.gy[i] == 0.0);
      CHECK(p.gy[i] == 0.0);
    }
    CHECK(s.gx[static_cast<std::size_t>(y) * 8 + 1] == 0.0);
  }
  CHECK_THROWS_AS(sobel(Image(2, 5)), InvalidArgument);
}

TEST_CASE("every feature is exactly equivariant under 90 degree rotation") {
  Rng rng(31);
  for (int k = 0; k < 3; ++k) {
    const Image img = test::random_image(20, 20, rng);
    const Image rot = augment(img, Augment::rot90);
    CHECK(frangi(rot, {}) == augment(frangi(img, {}), Augment::rot90));
    CHECK(jerman(rot, {}) == augment(jerman(img, {}), Augment::rot90));
    CHECK(prewitt(rot) == augment(prewitt(img), Augment::rot90));
    CHECK(sobel(rot) == augment(sobel(img), Augment::rot90));
  }
}

TEST_CASE("adding a scale never lowers the multi-scale response") {
  Rng rng(17);
  const Image img = test::random_image(24, 24, rng);
  VesselnessParams few, more;
  few.scales = {1.0, 2.0};
  more.scales = {1.0, 2.0, 3.0};
  for (auto fn : {&frangi_response, &jerman_response}) {
    const auto a = fn(img, few), b = fn(img, more);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] >= a[i]);
  }
}

TEST_CASE("normalisation maps extremes to 0 and 255") {
  const Image n = normalize_to_byte({3.0, -1.0, 7.0, 5.0}, 2, 2);
  CHECK(n.data()[1] == 0.0);
  CHECK(n.data()[2] == 255.0);
  CHECK(n.data()[0] == doctest::Approx(127.5));
  const Image flat = normalize_to_byte({2.0, 2.0, 2.0, 2.0}, 2, 2);
  for (double v : flat.data()) CHECK(v == 0.0);
}

TEST_CASE("extract_stack is deterministic and canonical") {
  Rng rng(1);
  const Image img = test::random_image(16, 16, rng);
  const FeatureStack a = extract_stack(img, {}), b = extract_stack(img, {});
  REQUIRE(a.n() == 4);
  CHECK(a.features[0] == frangi(img, {}));
  CHECK(a.features[1] == jerman(img, {}));
  CHECK(a.features[2] == prewitt(img));
  CHECK(a.features[3] == sobel(img));
  for (int i = 0; i < 4; ++i) {
    CHECK(a.features[i] == b.features[i]);
    CHECK(a.features[i].same_shape(img));
    CHECK(a.features[i].in_range());
  }
}

TEST_CASE("gaussian blur keeps constants") {
  const Image c(10, 9, ValueRange::byte, 90.0);
  const Image b = gaussian_blur(c, 1.3);
  for (double v : b.data()) CHECK(v == doctest::Approx(90.0).epsilon(1e-12));
}

}  // TEST_SUITE
