#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "tubuda/error.hpp"
#include "tubuda/metrics.hpp"

using namespace tubuda;

using test::brute_dice;
using test::brute_hd95;
using test::empty_mask;
using test::random_mask;
using test::to_image;

TEST_SUITE("metrics") {

TEST_CASE("membrane pixels are foreground") {
  const Image img(3, 1, {0.0, 127.0, 128.0});
  const Mask m = membrane_mask(img);
  CHECK(m.fg == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(m.count() == 2);
}

TEST_CASE("dice anchors") {
  Rng rng(1);
  Mask a = random_mask(8, 8, 0.3, rng);
  a.fg[0] = 1;
  CHECK(dice(a, a) == 1.0);
  Mask b = empty_mask(8, 8);
  for (std::size_t i = 0; i < a.fg.size(); ++i) b.fg[i] = !a.fg[i];
  CHECK(dice(a, b) == 0.0);
  CHECK(dice(empty_mask(4, 4), empty_mask(4, 4)) == 1.0);
  CHECK_THROWS_AS(dice(empty_mask(4, 4), empty_mask(4, 5)), InvalidArgument);
}

TEST_CASE("dice worked example") {
  Mask p = empty_mask(5, 5), g = empty_mask(5, 5);
  for (int i : {0, 1, 2, 3, 4, 5}) p.fg[i] = 1;
  for (int i : {3, 4, 5, 12}) g.fg[i] = 1;
  CHECK(dice(p, g) == 0.6);
  CHECK(dice(to_image(p), to_image(g)) == 0.6);
}

TEST_CASE("hd95 anchors") {
  Rng rng(2);
  Mask a = random_mask(9, 7, 0.3, rng);
  a.fg[3] = 1;
  CHECK(hd95(a, a) == 0.0);
  Mask p = empty_mask(6, 6), g = empty_mask(6, 6);
  p.fg[0] = 1;
  g.fg[4 * 6 + 3] = 1;
  CHECK(hd95(p, g) == 5.0);
  CHECK(std::isinf(hd95(p, empty_mask(6, 6))));
  CHECK(std::isinf(hd95(empty_mask(6, 6), g)));
  CHECK(std::isinf(hd95(empty_mask(6, 6), empty_mask(6, 6))));
}

TEST_CASE("distance transform matches brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(20)), h = 1 + static_cast<int>(rng.below(20));
    const Mask m = random_mask(w, h, rng.uniform(0.0, 0.2), rng);
    const std::vector<double> d = squared_distance_transform(m);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int v = 0; v < h; ++v) {
          for (int u = 0; u < w; ++u) {
            if (m.fg[v * w + u]) best = std::min(best, static_cast<double>((x - u) * (x - u) + (y - v) * (y - v)));
          }
        }
        CHECK(d[y * w + x] == best);
      }
    }
  }
}

TEST_CASE("dice and hd95 match brute force on random masks") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(32)), h = 1 + static_cast<int>(rng.below(32));
    const Mask a = random_mask(w, h, rng.uniform(0.0, 0.5), rng);
    const Mask b = random_mask(w, h, rng.uniform(0.0, 0.5), rng);
    CHECK(dice(a, b) == brute_dice(a, b));
    const double ref = brute_hd95(a, b);
    const double got = hd95(a, b);
    if (std::isinf(ref)) {
      CHECK(std::isinf(got));
    } else {
      CHECK(got == ref);
    }
    CHECK(hd95(b, a) == got);
    CHECK(dice(b, a) == dice(a, b));
  }
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3.0, 1.0, 2.0}, 50.0) == 2.0);
  CHECK(percentile({0.0, 10.0}, 95.0) == 9.5);
  CHECK(percentile({4.0}, 95.0) == 4.0);
  CHECK_THROWS_AS(percentile({}, 50.0), InvalidArgument);
}

TEST_CASE("summaries") {
  Rng rng(5);
  std::vector<EvalResult> rs;
  for (int i = 0; i < 7; ++i) {
    Mask m = random_mask(12, 12, 0.3, rng);
    m.fg[0] = 1;
    const Image img = to_image(m);
    rs.push_back(evaluate_pair("p" + std::to_string(i), img, img));
  }
  const EvalReport perfect = summarize(rs);
  CHECK(perfect.per_image.size() == 7);
  CHECK(perfect.mean_dice == 1.0);
  CHECK(perfect.mean_hd95 == 0.0);

  std::vector<EvalResult> mixed;
  for (int i = 0; i < 9; ++i) {
    mixed.push_back({"m" + std::to_string(i), rng.uniform(), i == 4 ? kInfiniteDistance : rng.uniform(0.0, 9.0)});
  }
  const EvalReport r = summarize(mixed);
  double sd = 0.0, sh = 0.0;
  for (const auto& e : mixed) {
    sd += e.dice;
    if (std::isfinite(e.hd95)) sh += e.hd95;
  }
  CHECK(std::abs(r.mean_dice - sd / 9.0) < 1e-12);
  CHECK(std::abs(r.mean_hd95 - sh / 8.0) < 1e-12);
  CHECK(r.finite_hd95 == 8);
  const nlohmann::json j = r.to_json();
  CHECK(j.at("per_image").size() == 9);
  CHECK(j.at("per_image")[4].at("hd95").is_null());
  CHECK(j.at("finite_hd95").get<int>() == 8);
}

}  // TEST_SUITE
