#include "tubuda/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tubuda/error.hpp"

namespace tubuda {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(fg.begin(), fg.end(), std::uint8_t{1}));
}

Mask membrane_mask(const Image& img) {
  Mask m{img.width(), img.height(), {}};
  const double mid = range_max(img.range()) / 2.0;
  m.fg.reserve(img.size());
  for (double v : img.data()) m.fg.push_back(v < mid ? 1 : 0);
  return m;
}

namespace {

void require_same(const Mask& a, const Mask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument(std::string(what) + ": mask sizes differ (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
}

// Lower envelope of parabolas over one row/column of squared distances.
void envelope_1d(const double* f, int n, double* out, std::vector<int>& v, std::vector<double>& z) {
  int k = 0;
  int first = -1;
  for (int q = 0; q < n; ++q) {
    if (std::isfinite(f[q])) {
      first = q;
      break;
    }
  }
  if (first < 0) {
    std::fill(out, out + n, kInfiniteDistance);
    return;
  }
  v[0] = first;
  z[0] = -kInfiniteDistance;
  z[1] = kInfiniteDistance;
  for (int q = first + 1; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    double s;
    while (true) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= z[k]) {
      v[k] = q;
    } else {
      ++k;
      v[k] = q;
      z[k] = s;
    }
    z[k + 1] = kInfiniteDistance;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const Mask& m) {
  const int w = m.width, h = m.height;
  std::vector<double> grid(m.fg.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = m.fg[i] ? 0.0 : kInfiniteDistance;
  const int n = std::max(w, h);
  std::vector<int> v(n);
  std::vector<double> z(n + 1), line(n), out(n);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) line[y] = grid[static_cast<std::size_t>(y) * w + x];
    envelope_1d(line.data(), h, out.data(), v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = grid.data() + static_cast<std::size_t>(y) * w;
    std::copy(row, row + w, line.begin());
    envelope_1d(line.data(), w, row, v, z);
  }
  return grid;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double dice(const Mask& pred, const Mask& gt) {
  require_same(pred, gt, "dice");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.fg.size(); ++i) {
    p += pred.fg[i];
    g += gt.fg[i];
    both += pred.fg[i] & gt.fg[i];
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double dice(const Image& pred, const Image& gt) { return dice(membrane_mask(pred), membrane_mask(gt)); }

namespace {

double directed_hd95(const Mask& from, const std::vector<double>& to_sq) {
  std::vector<double> d;
  for (std::size_t i = 0; i < from.fg.size(); ++i) {
    if (from.fg[i]) d.push_back(std::sqrt(to_sq[i]));
  }
  return percentile(std::move(d), 95.0);
}

}  // namespace

double hd95(const Mask& pred, const Mask& gt) {
  require_same(pred, gt, "hd95");
  const std::size_t np = pred.count(), ng = gt.count();
  if (np == 0 || ng == 0) return kInfiniteDistance;
  return std::max(directed_hd95(pred, squared_distance_transform(gt)),
                  directed_hd95(gt, squared_distance_transform(pred)));
}

double hd95(const Image& pred, const Image& gt) { return hd95(membrane_mask(pred), membrane_mask(gt)); }

EvalResult evaluate_pair(const std::string& id, const Image& pred, const Image& gt) {
  const Mask p = membrane_mask(pred), g = membrane_mask(gt);
  return {id, dice(p, g), hd95(p, g)};
}

EvalReport summarize(std::vector<EvalResult> results) {
  EvalReport r;
  r.per_image = std::move(results);
  double sd = 0.0, sh = 0.0;
  for (const auto& e : r.per_image) {
    sd += e.dice;
    if (std::isfinite(e.hd95)) {
      sh += e.hd95;
      ++r.finite_hd95;
    }
  }
  r.mean_dice = r.per_image.empty() ? 0.0 : sd / static_cast<double>(r.per_image.size());
  r.mean_hd95 = r.finite_hd95 == 0 ? kInfiniteDistance : sh / static_cast<double>(r.finite_hd95);
  return r;
}

nlohmann::json EvalReport::to_json() const {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json per = nlohmann::json::array();
  for (const auto& e : per_image) per.push_back({{"id", e.id}, {"dice", e.dice}, {"hd95", num(e.hd95)}});
  return {{"per_image", per}, {"mean_dice", mean_dice}, {"mean_hd95", num(mean_hd95)},
          {"finite_hd95", finite_hd95}};
}

}  // namespace tubuda
