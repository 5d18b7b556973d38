#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tubuda {

/// Declared value domain of an image.
enum class ValueRange { byte, unit };

inline double range_max(ValueRange r) { return r == ValueRange::byte ? 255.0 : 1.0; }

/// Row-major 2D scalar grid. Pixel (x, y) lives at data[y * width + x].
///
/// Values are held as doubles so filter outputs keep full precision; the
/// byte range only constrains what the values may be, not their storage.
class Image {
 public:
  Image() = default;
  Image(int width, int height, ValueRange range = ValueRange::byte, double fill = 0.0);
  /// Throws InvalidArgument if data.size() != width * height or any value is
  /// outside the declared range.
  Image(int width, int height, std::vector<double> data, ValueRange range = ValueRange::byte);

  int width() const { return width_; }
  int height() const { return height_; }
  ValueRange range() const { return range_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::vector<double>& storage() { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  /// True when every value lies in the declared range.
  bool in_range() const;
  /// Throws InvalidArgument when in_range() is false.
  void validate() const;
  /// Clamps every value into the declared range.
  void clamp();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  ValueRange range_ = ValueRange::byte;
  std::vector<double> data_;
};

}  // namespace tubuda
