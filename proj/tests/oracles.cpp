#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tubuda/error.hpp"
#include "tubuda/filters.hpp"

namespace tubuda::test {

namespace {

double brute_directed(const Mask& a, const Mask& b) {
  std::vector<double> d;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.fg[y * a.width + x]) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < b.height; ++v) {
        for (int u = 0; u < b.width; ++u) {
          if (b.fg[v * b.width + u]) best = std::min(best, static_cast<double>((x - u) * (x - u) + (y - v) * (y - v)));
        }
      }
      d.push_back(std::sqrt(best));
    }
  }
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

}  // namespace

Mask empty_mask(int w, int h) { return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)}; }

Mask random_mask(int w, int h, double density, Rng& rng) {
  Mask m = empty_mask(w, h);
  for (auto& v : m.fg) v = rng.uniform() < density ? 1 : 0;
  return m;
}

Image to_image(const Mask& m) {
  Image img(m.width, m.height);
  for (std::size_t i = 0; i < m.fg.size(); ++i) img.data()[i] = m.fg[i] ? 0.0 : 255.0;
  return img;
}

double brute_dice(const Mask& a, const Mask& b) {
  int na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.fg.size(); ++i) {
    na += a.fg[i];
    nb += b.fg[i];
    both += a.fg[i] && b.fg[i];
  }
  return na + nb == 0 ? 1.0 : 2.0 * both / static_cast<double>(na + nb);
}

double brute_hd95(const Mask& a, const Mask& b) {
  if (a.count() == 0 || b.count() == 0) return std::numeric_limits<double>::infinity();
  return std::max(brute_directed(a, b), brute_directed(b, a));
}

Image ridge(int w, int h, double y0, double width, double depth, bool dark) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    const double p = depth * std::exp(-(y - y0) * (y - y0) / (2.0 * width * width));
    for (int x = 0; x < w; ++x) img.at(x, y) = dark ? 230.0 - p : 25.0 + p;
  }
  return img;
}

double membrane_sharpness(const Image& img, const Image& label) {
  if (img.width() != label.width() || img.height() != label.height()) {
    throw InvalidArgument("membrane_sharpness: image and label sizes differ");
  }
  const std::vector<double> mag = gradient_magnitude(sobel_gradient(img));
  const Mask m = membrane_mask(label);
  double sum = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    if (m.fg[i]) sum += mag[i];
  }
  return m.count() == 0 ? 0.0 : sum / static_cast<double>(m.count());
}

}  // namespace tubuda::test
