#include "tubuda/filters.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tubuda/error.hpp"

namespace tubuda {

void VesselnessParams::validate() const {
  if (scales.empty()) throw InvalidArgument("vesselness scales must be non-empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw InvalidArgument("vesselness scales must be > 0");
    if (i > 0 && !(scales[i] > scales[i - 1])) {
      throw InvalidArgument("vesselness scales must be strictly increasing");
    }
  }
  if (!(frangi_b > 0.0)) throw InvalidArgument("frangi_b must be > 0");
  if (!(jerman_tau > 0.0 && jerman_tau <= 1.0)) throw InvalidArgument("jerman_tau must lie in (0, 1]");
}

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// One-sided kernel taps k[1..r]; the centre tap is implied by the pairing
// rule of each pass.
struct GaussianTaps {
  double centre = 0.0;         // smoothing centre weight
  std::vector<double> smooth;  // g_i, i >= 1
  std::vector<double> first;   // i / sigma^2 * g_i
  std::vector<double> second;  // (i^2 / sigma^4 - 1 / sigma^2) * g_i
};

GaussianTaps gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  const double s2 = sigma * sigma;
  std::vector<double> g(radius + 1);
  double total = 0.0;
  for (int i = 0; i <= radius; ++i) {
    g[i] = std::exp(-0.5 * i * i / s2);
    total += i == 0 ? g[i] : 2.0 * g[i];
  }
  GaussianTaps taps;
  taps.centre = g[0] / total;
  for (int i = 1; i <= radius; ++i) {
    const double gi = g[i] / total;
    taps.smooth.push_back(gi);
    taps.first.push_back(i / s2 * gi);
    taps.second.push_back((static_cast<double>(i) * i / (s2 * s2) - 1.0 / s2) * gi);
  }
  return taps;
}

enum class Axis { x, y };
enum class Pair { sum, difference, second };

// Symmetric-pair 1D pass. For tap i the two samples at +/- i are combined
// first (sum, difference, or sum minus twice the centre), which makes the
// pass exactly mirror-symmetric and exactly zero on constants for the
// derivative forms.
std::vector<double> pass(const std::vector<double>& src, int w, int h, Axis axis, Pair pair,
                         double centre, const std::vector<double>& taps) {
  std::vector<double> out(src.size());
  const int len = axis == Axis::x ? w : h;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int pos = axis == Axis::x ? x : y;
      auto sample = [&](int p) {
        const int q = reflect(p, len);
        return axis == Axis::x ? src[static_cast<std::size_t>(y) * w + q]
                               : src[static_cast<std::size_t>(q) * w + x];
      };
      const double c = src[static_cast<std::size_t>(y) * w + x];
      double acc = pair == Pair::sum ? centre * c : 0.0;
      for (std::size_t k = 0; k < taps.size(); ++k) {
        const int i = static_cast<int>(k) + 1;
        const double a = sample(pos + i);
        const double b = sample(pos - i);
        double combined = 0.0;
        switch (pair) {
          case Pair::sum: combined = a + b; break;
          case Pair::difference: combined = a - b; break;
          case Pair::second: combined = (a + b) - 2.0 * c; break;
        }
        acc += taps[k] * combined;
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

HessianField gaussian_hessian(const Image& img, double sigma) {
  if (!(sigma > 0.4)) {
    throw InvalidArgument("gaussian_hessian sigma " + std::to_string(sigma) +
                          " below numerical support (must be > 0.4)");
  }
  const int w = img.width();
  const int h = img.height();
  const std::vector<double> src(img.data().begin(), img.data().end());
  const GaussianTaps t = gaussian_taps(sigma);
  const double s2 = sigma * sigma;

  // Derivative pass first, smoothing second, for every component; the
  // mixed term averages both orders.
  HessianField f;
  f.width = w;
  f.height = h;
  f.xx = pass(pass(src, w, h, Axis::x, Pair::second, 0.0, t.second), w, h, Axis::y, Pair::sum,
              t.centre, t.smooth);
  f.yy = pass(pass(src, w, h, Axis::y, Pair::second, 0.0, t.second), w, h, Axis::x, Pair::sum,
              t.centre, t.smooth);
  const auto dx = pass(src, w, h, Axis::x, Pair::difference, 0.0, t.first);
  const auto dy = pass(src, w, h, Axis::y, Pair::difference, 0.0, t.first);
  const auto dxy = pass(dx, w, h, Axis::y, Pair::difference, 0.0, t.first);
  const auto dyx = pass(dy, w, h, Axis::x, Pair::difference, 0.0, t.first);
  f.xy.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    f.xx[i] *= s2;
    f.yy[i] *= s2;
    f.xy[i] = 0.5 * (dxy[i] + dyx[i]) * s2;
  }
  return f;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int w = img.width();
  const int h = img.height();
  const std::vector<double> src(img.data().begin(), img.data().end());
  const GaussianTaps t = gaussian_taps(sigma);
  Image out(w, h, img.range());
  out.storage() = pass(pass(src, w, h, Axis::x, Pair::sum, t.centre, t.smooth), w, h, Axis::y,
                       Pair::sum, t.centre, t.smooth);
  out.clamp();
  return out;
}

Eigen2 hessian_eigenvalues(double xx, double xy, double yy) {
  const double mean = (xx + yy) * 0.5;
  const double half_diff = (xx - yy) * 0.5;
  const double r = std::sqrt(half_diff * half_diff + xy * xy);
  const double a = mean + r;
  const double b = mean - r;
  return std::abs(a) > std::abs(b) ? Eigen2{b, a} : Eigen2{a, b};
}

namespace {

double oriented(double l2, Polarity p) { return p == Polarity::dark_on_bright ? l2 : -l2; }

std::vector<double> multi_scale_max(const Image& img, const VesselnessParams& p,
                                    std::vector<double> (*single)(const HessianField&,
                                                                  const VesselnessParams&)) {
  p.validate();
  std::vector<double> best(img.size(), 0.0);
  for (double sigma : p.scales) {
    const auto r = single(gaussian_hessian(img, sigma), p);
    for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(best[i], r[i]);
  }
  return best;
}

}  // namespace

std::vector<double> frangi_single_scale(const HessianField& h, const VesselnessParams& p) {
  const std::size_t n = h.xx.size();
  std::vector<Eigen2> eig(n);
  double max_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    eig[i] = hessian_eigenvalues(h.xx[i], h.xy[i], h.yy[i]);
    max_s = std::max(max_s, std::sqrt(eig[i].l1 * eig[i].l1 + eig[i].l2 * eig[i].l2));
  }
  const double c = p.frangi_c > 0.0 ? p.frangi_c : 0.5 * max_s;
  std::vector<double> out(n, 0.0);
  if (!(c > 0.0)) return out;
  const double two_b2 = 2.0 * p.frangi_b * p.frangi_b;
  const double two_c2 = 2.0 * c * c;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [l1, l2] = eig[i];
    if (!(oriented(l2, p.polarity) > 0.0)) continue;
    const double rb = l1 / l2;
    const double s2 = l1 * l1 + l2 * l2;
    out[i] = std::exp(-rb * rb / two_b2) * (1.0 - std::exp(-s2 / two_c2));
  }
  return out;
}

std::vector<double> jerman_single_scale(const HessianField& h, const VesselnessParams& p) {
  const std::size_t n = h.xx.size();
  std::vector<double> lam(n);
  double max_lam = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lam[i] = oriented(hessian_eigenvalues(h.xx[i], h.xy[i], h.yy[i]).l2, p.polarity);
    max_lam = std::max(max_lam, lam[i]);
  }
  std::vector<double> out(n, 0.0);
  if (!(max_lam > 0.0)) return out;
  const double cutoff = p.jerman_tau * max_lam;
  for (std::size_t i = 0; i < n; ++i) {
    const double l2 = lam[i];
    if (!(l2 > 0.0)) continue;
    const double rho = l2 > cutoff ? l2 : cutoff;
    if (l2 >= 0.5 * rho) {
      out[i] = 1.0;
    } else {
      const double q = 3.0 / (l2 + rho);
      out[i] = l2 * l2 * (rho - l2) * q * q * q;
    }
  }
  return out;
}

std::vector<double> frangi_response(const Image& img, const VesselnessParams& p) {
  return multi_scale_max(img, p, &frangi_single_scale);
}

std::vector<double> jerman_response(const Image& img, const VesselnessParams& p) {
  return multi_scale_max(img, p, &jerman_single_scale);
}

Image normalize_to_byte(const std::vector<double>& response, int width, int height) {
  Image out(width, height);
  if (response.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(response.begin(), response.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return out;
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < response.size(); ++i) {
    out.data()[i] = std::clamp((response[i] - lo) * scale, 0.0, 255.0);
  }
  return out;
}

Image frangi(const Image& img, const VesselnessParams& p) {
  return normalize_to_byte(frangi_response(img, p), img.width(), img.height());
}

Image jerman(const Image& img, const VesselnessParams& p) {
  return normalize_to_byte(jerman_response(img, p), img.width(), img.height());
}

namespace {

Gradient edge_gradient(const Image& img, double centre_weight) {
  if (img.width() < 3 || img.height() < 3) {
    throw InvalidArgument("edge operators need an image of at least 3x3");
  }
  const int w = img.width();
  const int h = img.height();
  const std::vector<double> src(img.data().begin(), img.data().end());
  const std::vector<double> one{1.0};
  Gradient g;
  g.gx = pass(pass(src, w, h, Axis::x, Pair::difference, 0.0, one), w, h, Axis::y, Pair::sum,
              centre_weight, one);
  g.gy = pass(pass(src, w, h, Axis::y, Pair::difference, 0.0, one), w, h, Axis::x, Pair::sum,
              centre_weight, one);
  return g;
}

}  // namespace

Gradient prewitt_gradient(const Image& img) { return edge_gradient(img, 1.0); }
Gradient sobel_gradient(const Image& img) { return edge_gradient(img, 2.0); }

std::vector<double> gradient_magnitude(const Gradient& g) {
  std::vector<double> m(g.gx.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::sqrt(g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i]);
  return m;
}

Image prewitt(const Image& img) {
  return normalize_to_byte(gradient_magnitude(prewitt_gradient(img)), img.width(), img.height());
}

Image sobel(const Image& img) {
  return normalize_to_byte(gradient_magnitude(sobel_gradient(img)), img.width(), img.height());
}

FeatureStack extract_stack(const Image& img, const VesselnessParams& p) {
  p.validate();
  FeatureStack s;
  s.base = img;
  s.features.reserve(kFeatureCount);
  s.features.push_back(frangi(img, p));
  s.features.push_back(jerman(img, p));
  s.features.push_back(prewitt(img));
  s.features.push_back(sobel(img));
  return s;
}

}  // namespace tubuda
