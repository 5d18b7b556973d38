#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "tubuda/synthbench.hpp"
#include "tubuda/train.hpp"

namespace tubuda {

/// Every module config of one pipeline run. Written next to each run's
/// outputs so the directory alone reproduces it.
struct RunConfig {
  std::uint64_t seed = 0;
  WidthPreset preset = WidthPreset::desk;
  SynthConfig synth;
  VesselnessParams vesselness;
  /// Feature-weight module of the super-resolution stage.
  HybridConfig sr_hybrid;
  SrConfig sr;
  SrTrainConfig sr_train;
  SegConfig seg;

  /// Desk pipeline defaults: same-size super-resolution, 200 SR steps on
  /// 32-pixel crops at lr 0.001, 500 segmentation steps.
  RunConfig();

  /// Sets every width of the chosen preset (feature-weight blocks, SR
  /// channels, U-Net base, discriminator width and input channels).
  void apply_preset(WidthPreset p);
  /// Propagates the run seed to the dataset and both optimisers.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `patch` onto `base`. Unknown keys and wrongly typed values
/// throw ConfigError naming the key.
RunConfig merge_run_config(const RunConfig& base, const nlohmann::json& patch);
RunConfig load_run_config(const std::filesystem::path& path);

WidthPreset parse_preset(const std::string& s);
const char* to_string(WidthPreset p);

}  // namespace tubuda
