#include "tubuda/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <vector>

#include "tubuda/error.hpp"
#include "tubuda/filters.hpp"
#include "tubuda/random.hpp"

namespace tubuda {

namespace fs = std::filesystem;

namespace {

constexpr double kMembraneIntensity = 50.0;

void validate_domain(const DomainParams& d, const char* name) {
  if (d.blur < 0.0 || d.noise < 0.0 || d.extra_blur < 0.0 || !(d.contrast > 0.0)) {
    throw ConfigError(std::string("synth domain ") + name + ": blur/noise must be >= 0, contrast > 0");
  }
  if (d.degrade < 1) throw ConfigError(std::string("synth domain ") + name + ": degrade must be >= 1");
}

struct Point {
  double x, y;
};

}  // namespace

void SynthConfig::validate() const {
  if (size < 16 || size % 16 != 0) throw ConfigError("synth size must be a positive multiple of 16");
  if (cells < 2) throw ConfigError("synth cells must be >= 2");
  if (thickness < 1) throw ConfigError("synth thickness must be >= 1");
  validate_domain(a, "a");
  validate_domain(b, "b");
  if (b.degrade > 1 && size % b.degrade != 0) throw ConfigError("synth size not divisible by degrade");
  if (a.degrade > 1 && size % a.degrade != 0) throw ConfigError("synth size not divisible by degrade");
  if (source_train < 0 || target_train < 0 || source_test < 0 || target_test < 0) {
    throw ConfigError("synth split counts must be >= 0");
  }
}

LabeledSample generate_sample(const SynthConfig& cfg, SynthDomain domain, std::uint64_t index) {
  cfg.validate();
  const int n = cfg.size;
  const std::uint64_t base_seed = derive_seed(cfg.seed, index);
  Rng geo(derive_seed(base_seed, 0));

  std::vector<Point> seeds(cfg.cells);
  std::vector<double> cell_value(cfg.cells);
  for (int i = 0; i < cfg.cells; ++i) {
    seeds[i] = {geo.uniform(0.0, n), geo.uniform(0.0, n)};
    cell_value[i] = geo.uniform(150.0, 225.0);
  }
  // Low-frequency shading shared by all cells plus a few dim vesicle-like
  // blobs that are not membrane.
  const double fx = geo.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / n;
  const double fy = geo.uniform(0.5, 2.0) * 2.0 * std::numbers::pi / n;
  const double phase = geo.uniform(0.0, 2.0 * std::numbers::pi);
  struct Blob {
    Point c;
    double r;
  };
  std::vector<Blob> blobs(static_cast<std::size_t>(geo.below(4)));
  for (auto& b : blobs) b = {{geo.uniform(0.0, n), geo.uniform(0.0, n)}, geo.uniform(1.5, 3.0)};

  Image label(n, n, ValueRange::byte, kBackgroundValue);
  Image clean(n, n, ValueRange::byte);
  const double half = cfg.thickness / 2.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const Point p{x + 0.5, y + 0.5};
      int i1 = 0, i2 = 1;
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      for (int i = 0; i < cfg.cells; ++i) {
        const double dx = p.x - seeds[i].x, dy = p.y - seeds[i].y;
        const double d = dx * dx + dy * dy;
        if (d < d1) {
          d2 = d1;
          i2 = i1;
          d1 = d;
          i1 = i;
        } else if (d < d2) {
          d2 = d;
          i2 = i;
        }
      }
      const double sep = std::hypot(seeds[i1].x - seeds[i2].x, seeds[i1].y - seeds[i2].y);
      const double to_bisector = (d2 - d1) / (2.0 * sep);
      double v = cell_value[i1] + 12.0 * std::sin(fx * x + phase) * std::cos(fy * y);
      for (const auto& b : blobs) {
        if (std::hypot(p.x - b.c.x, p.y - b.c.y) <= b.r) v -= 55.0;
      }
      if (to_bisector <= half) {
        label.at(x, y) = kMembraneValue;
        v = kMembraneIntensity;
      }
      clean.at(x, y) = std::clamp(v, 0.0, 255.0);
    }
  }

  const DomainParams& d = domain == SynthDomain::a ? cfg.a : cfg.b;
  Rng noise(derive_seed(base_seed, domain == SynthDomain::a ? 1 : 2));
  Image img = gaussian_blur(clean, d.blur);
  for (double& v : img.data()) v = std::clamp(128.0 + d.contrast * (v - 128.0) + d.noise * noise.normal(), 0.0, 255.0);
  if (d.degrade > 1) img = downsample_then_upsample(img, d.degrade);
  img = gaussian_blur(img, d.extra_blur);
  for (double& v : img.data()) v = std::clamp(std::round(v + d.shift), 0.0, 255.0);
  return {img, label};
}

DatasetSplit generate_domain(const SynthConfig& cfg, SynthDomain domain, int count, Role role,
                             std::uint64_t first_index) {
  DatasetSplit split(domain == SynthDomain::a ? Domain::source : Domain::target, role);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t index = first_index + static_cast<std::uint64_t>(i);
    LabeledSample s = generate_sample(cfg, domain, index);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04llu", domain == SynthDomain::a ? "a" : "b",
                  static_cast<unsigned long long>(index));
    split.add(id, std::move(s.image), std::move(s.label));
  }
  return split;
}

Benchmark generate_benchmark(const SynthConfig& cfg) {
  Benchmark b;
  b.source_train = generate_domain(cfg, SynthDomain::a, cfg.source_train, Role::train, 0);
  b.target_train = generate_domain(cfg, SynthDomain::b, cfg.target_train, Role::train, 1000);
  b.source_test = generate_domain(cfg, SynthDomain::a, cfg.source_test, Role::test, 2000);
  b.target_test = generate_domain(cfg, SynthDomain::b, cfg.target_test, Role::test, 3000);
  return b;
}

void write_benchmark(const SynthConfig& cfg, const fs::path& dir) {
  cfg.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  std::vector<ManifestEntry> entries;
  struct Part {
    SynthDomain domain;
    int count;
    Role role;
    std::uint64_t first;
  };
  const Part parts[] = {{SynthDomain::a, cfg.source_train, Role::train, 0},
                        {SynthDomain::b, cfg.target_train, Role::train, 1000},
                        {SynthDomain::a, cfg.source_test, Role::test, 2000},
                        {SynthDomain::b, cfg.target_test, Role::test, 3000}};
  for (const auto& part : parts) {
    const DatasetSplit split = generate_domain(cfg, part.domain, part.count, part.role, part.first);
    for (std::size_t i = 0; i < split.size(); ++i) {
      const std::string name = split.id(i) + ".png";
      save_image(split.image(i), dir / "images" / name);
      // Target/train labels stay sealed inside the split; write them from
      // the generator so the files exist for later evaluation.
      const Image label = split.labels_readable()
                              ? split.label(i)
                              : generate_sample(cfg, part.domain, part.first + i).label;
      save_image(label, dir / "labels" / name);
      entries.push_back({"images/" + name, "labels/" + name, split.domain(), split.role()});
    }
  }
  write_manifest(entries, dir / "manifest.json");
}

}  // namespace tubuda
