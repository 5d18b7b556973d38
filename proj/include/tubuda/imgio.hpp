#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tubuda/image.hpp"

namespace tubuda {

/// Membrane pixels are 0 (dark), background 255.
inline constexpr double kMembraneValue = 0.0;
inline constexpr double kBackgroundValue = 255.0;

struct LabeledSample {
  Image image;
  Image label;
};

/// Throws InvalidArgument unless dimensions match and the label is
/// strictly {0, 255}.
void validate_sample(const LabeledSample& sample);
bool is_binary_label(const Image& label);

enum class Domain { source, target };
enum class Role { train, test };

std::string_view to_string(Domain d);
std::string_view to_string(Role r);
Domain parse_domain(std::string_view s);
Role parse_role(std::string_view s);

/// Ordered collection of images for one (domain, role) pair.
///
/// Labels of target/train splits are sealed: `label()` throws
/// LabelAccessError for them even when the data carries one, so training
/// code can never consume target supervision.
class DatasetSplit {
 public:
  DatasetSplit(Domain domain, Role role) : domain_(domain), role_(role) {}

  void add(std::string id, Image image, std::optional<Image> label = std::nullopt);

  Domain domain() const { return domain_; }
  Role role() const { return role_; }
  std::size_t size() const { return images_.size(); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const Image& image(std::size_t i) const { return images_.at(i); }
  bool labels_readable() const { return !(domain_ == Domain::target && role_ == Role::train); }
  bool has_label(std::size_t i) const;
  const Image& label(std::size_t i) const;
  LabeledSample sample(std::size_t i) const { return {image(i), label(i)}; }

 private:
  Domain domain_;
  Role role_;
  std::vector<std::string> ids_;
  std::vector<Image> images_;
  std::vector<std::optional<Image>> labels_;
};

// --- file I/O -------------------------------------------------------------

/// Reads an 8-bit grayscale PNG or single-page 8-bit grayscale TIFF.
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit grayscale PNG; values are rounded and clamped, unit-range
/// images are scaled by 255.
void save_image(const Image& img, const std::filesystem::path& path);

// --- resampling -----------------------------------------------------------

/// Catmull-Rom kernel (a = -0.5).
double cubic_weight(double t);

/// Separable bicubic resize with pixel-centre alignment and replicated
/// borders, clamped to the source range. Both targets must be >= 4.
Image resize_cubic(const Image& img, int new_w, int new_h);
/// Nearest-neighbour resize (used for label masks).
Image resize_nearest(const Image& img, int new_w, int new_h);
/// Mean over non-overlapping factor x factor blocks.
Image block_downsample(const Image& img, int factor);
/// Sub-rectangle copy; the rectangle must lie inside the image.
Image crop(const Image& img, int x0, int y0, int w, int h);
/// block_downsample followed by resize_cubic back to the original size.
Image downsample_then_upsample(const Image& img, int factor);

// --- augmentation ---------------------------------------------------------

enum class Augment { identity, rot90, rot180, rot270, flip_h, flip_v };

std::string_view to_string(Augment op);
Augment parse_augment(std::string_view s);

/// Exact pixel permutation. rot90 maps (x, y) -> (h - 1 - y, x).
Image augment(const Image& img, Augment op);
LabeledSample augment(const LabeledSample& sample, Augment op);

// --- manifest -------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  std::optional<std::string> label_path;
  Domain domain = Domain::source;
  Role role = Role::train;
};

/// JSON file: {"entries": [{"path", "label_path"?, "domain", "role"}]}.
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Loads all entries with the given domain and role into a split.
DatasetSplit load_split(const std::filesystem::path& manifest, Domain domain, Role role);

}  // namespace tubuda
