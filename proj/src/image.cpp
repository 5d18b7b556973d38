#include "tubuda/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tubuda/error.hpp"

namespace tubuda {

Image::Image(int width, int height, ValueRange range, double fill)
    : width_(width), height_(height), range_(range) {
  if (width < 0 || height < 0) {
    throw InvalidArgument("image dimensions must be non-negative");
  }
  data_.assign(static_cast<std::size_t>(width) * height, fill);
  validate();
}

Image::Image(int width, int height, std::vector<double> data, ValueRange range)
    : width_(width), height_(height), range_(range), data_(std::move(data)) {
  if (width < 0 || height < 0) {
    throw InvalidArgument("image dimensions must be non-negative");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                          " != " + std::to_string(width) + "x" + std::to_string(height));
  }
  validate();
}

bool Image::in_range() const {
  const double hi = range_max(range_);
  return std::all_of(data_.begin(), data_.end(),
                     [hi](double v) { return std::isfinite(v) && v >= 0.0 && v <= hi; });
}

void Image::validate() const {
  if (!in_range()) {
    throw InvalidArgument("image value outside declared range [0, " +
                          std::to_string(static_cast<int>(range_max(range_))) + "]");
  }
}

void Image::clamp() {
  const double hi = range_max(range_);
  for (double& v : data_) {
    v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, hi);
  }
}

}  // namespace tubuda
