#pragma once

#include <cstdint>
#include <filesystem>

#include "tubuda/imgio.hpp"

namespace tubuda {

struct DomainParams {
  double blur = 0.8;        ///< Gaussian sigma applied to the clean rendering
  double noise = 6.0;       ///< additive Gaussian noise sigma
  double contrast = 1.0;    ///< scaling about mid-gray
  int degrade = 1;          ///< block-average then cubic-upsample factor (1 = none)
  double extra_blur = 0.0;  ///< sigma applied after degradation
  double shift = 0.0;       ///< additive intensity offset
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int size = 64;
  int cells = 8;
  int thickness = 2;
  DomainParams a{};
  DomainParams b{0.8, 6.0, 1.0, 2, 1.0, 20.0};
  int source_train = 40;
  int target_train = 40;
  int source_test = 10;
  int target_test = 10;

  void validate() const;
};

enum class SynthDomain { a, b };

/// One image/label pair. Geometry and texture depend only on (seed, index),
/// so the A and B renderings of an index show the same cells.
LabeledSample generate_sample(const SynthConfig& cfg, SynthDomain domain, std::uint64_t index);

/// `count` samples with indices first_index, first_index + 1, ...; domain A
/// becomes a source split and domain B a target split.
DatasetSplit generate_domain(const SynthConfig& cfg, SynthDomain domain, int count, Role role,
                             std::uint64_t first_index = 0);

struct Benchmark {
  DatasetSplit source_train{Domain::source, Role::train};
  DatasetSplit target_train{Domain::target, Role::train};
  DatasetSplit source_test{Domain::source, Role::test};
  DatasetSplit target_test{Domain::target, Role::test};
};

/// Source train/test from domain A, target train/test from domain B, each
/// split drawn from its own index range.
Benchmark generate_benchmark(const SynthConfig& cfg);

/// Writes images/ and labels/ PNGs plus manifest.json under `dir`.
void write_benchmark(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace tubuda
