#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tubuda/image.hpp"

namespace tubuda {

/// Binary foreground mask; membrane is foreground.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> fg;

  std::size_t count() const;
};

/// Pixels darker than mid-range (membrane value 0) become foreground.
Mask membrane_mask(const Image& img);

/// 2|P & G| / (|P| + |G|); 1 when both are empty.
double dice(const Mask& pred, const Mask& gt);
double dice(const Image& pred, const Image& gt);

/// Exact squared Euclidean distance from every pixel to the nearest
/// foreground pixel (separable lower-envelope transform). Infinite when the
/// mask has no foreground.
std::vector<double> squared_distance_transform(const Mask& m);

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();

/// max of the two directed 95th-percentile distances between foreground
/// pixel centres; infinite when either mask is empty.
double hd95(const Mask& pred, const Mask& gt);
double hd95(const Image& pred, const Image& gt);

struct EvalResult {
  std::string id;
  double dice = 0.0;
  double hd95 = 0.0;
};

struct EvalReport {
  std::vector<EvalResult> per_image;
  double mean_dice = 0.0;
  /// Mean over the finite hd95 values; infinite when there are none.
  double mean_hd95 = 0.0;
  std::size_t finite_hd95 = 0;

  /// {per_image: [{id, dice, hd95}], mean_dice, mean_hd95, finite_hd95};
  /// infinite distances serialise as null.
  nlohmann::json to_json() const;
};

EvalResult evaluate_pair(const std::string& id, const Image& pred, const Image& gt);
EvalReport summarize(std::vector<EvalResult> results);

}  // namespace tubuda
