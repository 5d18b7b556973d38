#include "tubuda/imgio.hpp"

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

#include "tubuda/error.hpp"

namespace tubuda {

namespace fs = std::filesystem;
using nlohmann::json;

// --- samples and splits ---------------------------------------------------

bool is_binary_label(const Image& label) {
  return std::all_of(label.data().begin(), label.data().end(),
                     [](double v) { return v == kMembraneValue || v == kBackgroundValue; });
}

void validate_sample(const LabeledSample& sample) {
  if (!sample.image.same_shape(sample.label)) {
    throw InvalidArgument("image and label dimensions differ");
  }
  if (!is_binary_label(sample.label)) {
    throw InvalidArgument("label values must be exactly 0 or 255");
  }
}

std::string_view to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
std::string_view to_string(Role r) { return r == Role::train ? "train" : "test"; }

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ConfigError("unknown domain '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
  if (s == "train") return Role::train;
  if (s == "test") return Role::test;
  throw ConfigError("unknown role '" + std::string(s) + "'");
}

void DatasetSplit::add(std::string id, Image image, std::optional<Image> label) {
  if (label) {
    validate_sample({image, *label});
  } else if (domain_ == Domain::source && role_ == Role::train) {
    throw InvalidArgument("source/train sample '" + id + "' has no label");
  }
  ids_.push_back(std::move(id));
  images_.push_back(std::move(image));
  labels_.push_back(std::move(label));
}

bool DatasetSplit::has_label(std::size_t i) const {
  return labels_readable() && labels_.at(i).has_value();
}

const Image& DatasetSplit::label(std::size_t i) const {
  if (!labels_readable()) {
    throw LabelAccessError("labels of target/train samples are not accessible");
  }
  const auto& l = labels_.at(i);
  if (!l) {
    throw LabelAccessError("sample '" + ids_.at(i) + "' has no label");
  }
  return *l;
}

// --- PNG / TIFF -----------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  // Errors detected after setjmp are reported once the png state is gone.
  std::string problem;
  std::vector<double> pixels;
  std::vector<png_byte> row;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    problem = "unsupported colorspace";
  } else if (bit_depth != 8) {
    problem = "unsupported bit depth " + std::to_string(bit_depth);
  } else {
    row.resize(width);
    pixels.reserve(static_cast<std::size_t>(width) * height);
    for (png_uint_32 y = 0; y < height; ++y) {
      png_read_row(png, row.data(), nullptr);
      pixels.insert(pixels.end(), row.begin(), row.end());
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!problem.empty()) throw IoError(problem + " in '" + path.string() + "'");
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

struct TiffCloser {
  void operator()(TIFF* t) const {
    if (t) TIFFClose(t);
  }
};

Image load_tiff(const fs::path& path) {
  TIFFSetErrorHandler(nullptr);
  TIFFSetWarningHandler(nullptr);
  std::unique_ptr<TIFF, TiffCloser> tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw IoError("cannot open TIFF '" + path.string() + "'");

  uint32_t width = 0, height = 0;
  uint16_t spp = 1, bps = 1, photometric = PHOTOMETRIC_MINISBLACK;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetField(tif.get(), TIFFTAG_PHOTOMETRIC, &photometric);
  if (spp != 1 ||
      (photometric != PHOTOMETRIC_MINISBLACK && photometric != PHOTOMETRIC_MINISWHITE)) {
    throw IoError("unsupported colorspace in '" + path.string() + "'");
  }
  if (bps != 8) {
    throw IoError("unsupported bit depth " + std::to_string(bps) + " in '" + path.string() + "'");
  }
  if (TIFFNumberOfDirectories(tif.get()) != 1) {
    throw IoError("multi-page TIFF not supported: '" + path.string() + "'");
  }
  std::vector<double> pixels;
  pixels.reserve(static_cast<std::size_t>(width) * height);
  std::vector<uint8_t> row(TIFFScanlineSize(tif.get()));
  for (uint32_t y = 0; y < height; ++y) {
    if (TIFFReadScanline(tif.get(), row.data(), y) < 0) {
      throw IoError("corrupt TIFF '" + path.string() + "'");
    }
    for (uint32_t x = 0; x < width; ++x) {
      const double v = row[x];
      pixels.push_back(photometric == PHOTOMETRIC_MINISWHITE ? 255.0 - v : v);
    }
  }
  return Image(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: '" + path.string() + "'");
  const std::string ext = lower_ext(path);
  if (ext == ".tif" || ext == ".tiff") return load_tiff(path);
  return load_png(path);
}

void save_image(const Image& img, const fs::path& path) {
  const double scale = img.range() == ValueRange::unit ? 255.0 : 1.0;
  std::vector<png_byte> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::nearbyint(img.data()[i] * scale);
    bytes[i] = static_cast<png_byte>(std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 255.0));
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width());
  out.height = static_cast<png_uint_32>(img.height());
  out.format = PNG_FORMAT_GRAY;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + out.message);
  }
}

// --- resampling -----------------------------------------------------------

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> cubic_taps(int src_len, int dst_len) {
  std::vector<Taps> taps(dst_len);
  const double scale = static_cast<double>(src_len) / dst_len;
  for (int i = 0; i < dst_len; ++i) {
    const double s = (i + 0.5) * scale - 0.5;
    const double f = std::floor(s);
    const double t = s - f;
    const int base = static_cast<int>(f);
    for (int k = 0; k < 4; ++k) {
      taps[i].index[k] = std::clamp(base - 1 + k, 0, src_len - 1);
      taps[i].weight[k] = cubic_weight(t - (k - 1));
    }
  }
  return taps;
}

}  // namespace

Image resize_cubic(const Image& img, int new_w, int new_h) {
  if (new_w < 4 || new_h < 4) {
    throw InvalidArgument("resize_cubic target " + std::to_string(new_w) + "x" +
                          std::to_string(new_h) + " smaller than the 4-tap kernel support");
  }
  if (img.empty()) throw InvalidArgument("resize_cubic on empty image");
  const auto tx = cubic_taps(img.width(), new_w);
  const auto ty = cubic_taps(img.height(), new_h);

  // Horizontal pass into an intermediate of size new_w x height.
  std::vector<double> tmp(static_cast<std::size_t>(new_w) * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < new_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * img.at(tx[x].index[k], y);
      tmp[static_cast<std::size_t>(y) * new_w + x] = acc;
    }
  }
  Image out(new_w, new_h, img.range());
  for (int y = 0; y < new_h; ++y) {
    for (int x = 0; x < new_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        acc += ty[y].weight[k] * tmp[static_cast<std::size_t>(ty[y].index[k]) * new_w + x];
      }
      out.at(x, y) = acc;
    }
  }
  out.clamp();
  return out;
}

Image resize_nearest(const Image& img, int new_w, int new_h) {
  if (new_w < 1 || new_h < 1) throw InvalidArgument("resize_nearest target must be >= 1");
  Image out(new_w, new_h, img.range());
  for (int y = 0; y < new_h; ++y) {
    const int sy = std::min(img.height() - 1, static_cast<int>((y + 0.5) * img.height() / new_h));
    for (int x = 0; x < new_w; ++x) {
      const int sx = std::min(img.width() - 1, static_cast<int>((x + 0.5) * img.width() / new_w));
      out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

Image block_downsample(const Image& img, int factor) {
  if (factor < 1) throw InvalidArgument("downsample factor must be >= 1");
  if (img.width() % factor != 0 || img.height() % factor != 0) {
    throw InvalidArgument("image " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " not divisible by factor " +
                          std::to_string(factor));
  }
  const int w = img.width() / factor;
  const int h = img.height() / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  Image out(w, h, img.range());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) acc += img.at(x * factor + dx, y * factor + dy);
      }
      out.at(x, y) = acc * inv;
    }
  }
  return out;
}

Image downsample_then_upsample(const Image& img, int factor) {
  if (factor < 2) throw InvalidArgument("downsample_then_upsample factor must be >= 2");
  return resize_cubic(block_downsample(img, factor), img.width(), img.height());
}

// --- augmentation ---------------------------------------------------------

std::string_view to_string(Augment op) {
  switch (op) {
    case Augment::identity: return "identity";
    case Augment::rot90: return "rot90";
    case Augment::rot180: return "rot180";
    case Augment::rot270: return "rot270";
    case Augment::flip_h: return "flip_h";
    case Augment::flip_v: return "flip_v";
  }
  return "?";
}

Augment parse_augment(std::string_view s) {
  for (Augment op : {Augment::identity, Augment::rot90, Augment::rot180, Augment::rot270,
                     Augment::flip_h, Augment::flip_v}) {
    if (to_string(op) == s) return op;
  }
  throw ConfigError("unknown augmentation '" + std::string(s) + "'");
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > img.width() || y0 + h > img.height()) {
    throw InvalidArgument("crop rectangle exceeds the " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " image");
  }
  Image out(w, h, img.range());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  }
  return out;
}

Image augment(const Image& img, Augment op) {
  const int w = img.width();
  const int h = img.height();
  const bool rotation = op == Augment::rot90 || op == Augment::rot180 || op == Augment::rot270;
  if (rotation && w != h) {
    throw InvalidArgument("rotation requires a square image, got " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
  Image out(w, h, img.range());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = img.at(x, y);
      switch (op) {
        case Augment::identity: out.at(x, y) = v; break;
        case Augment::rot90: out.at(h - 1 - y, x) = v; break;
        case Augment::rot180: out.at(w - 1 - x, h - 1 - y) = v; break;
        case Augment::rot270: out.at(y, w - 1 - x) = v; break;
        case Augment::flip_h: out.at(w - 1 - x, y) = v; break;
        case Augment::flip_v: out.at(x, h - 1 - y) = v; break;
      }
    }
  }
  return out;
}

LabeledSample augment(const LabeledSample& sample, Augment op) {
  return {augment(sample.image, op), augment(sample.label, op)};
}

// --- manifest -------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  }
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  try {
    for (const auto& e : doc.at("entries")) {
      ManifestEntry m;
      m.path = (base / e.at("path").get<std::string>()).string();
      if (e.contains("label_path") && !e["label_path"].is_null()) {
        m.label_path = (base / e["label_path"].get<std::string>()).string();
      }
      m.domain = parse_domain(e.at("domain").get<std::string>());
      m.role = parse_role(e.at("role").get<std::string>());
      entries.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  json arr = json::array();
  for (const auto& e : entries) {
    json j = {{"path", e.path},
              {"domain", std::string(to_string(e.domain))},
              {"role", std::string(to_string(e.role))}};
    j["label_path"] = e.label_path ? json(*e.label_path) : json(nullptr);
    arr.push_back(std::move(j));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << json{{"entries", arr}}.dump(2) << '\n';
}

DatasetSplit load_split(const fs::path& manifest, Domain domain, Role role) {
  DatasetSplit split(domain, role);
  for (const auto& e : read_manifest(manifest)) {
    if (e.domain != domain || e.role != role) continue;
    std::optional<Image> label;
    if (e.label_path) label = load_image(*e.label_path);
    split.add(fs::path(e.path).stem().string(), load_image(e.path), std::move(label));
  }
  return split;
}

}  // namespace tubuda
