#pragma once

#include <vector>

#include "tubuda/image.hpp"

namespace tubuda {

enum class Polarity { dark_on_bright, bright_on_dark };

struct VesselnessParams {
  std::vector<double> scales{1.0, 2.0, 4.0};
  double frangi_b = 0.5;
  /// Structureness sensitivity. Non-positive means adaptive: half of the
  /// maximum Hessian norm S over the image at each scale.
  double frangi_c = 0.0;
  double jerman_tau = 0.5;
  Polarity polarity = Polarity::dark_on_bright;

  /// Throws InvalidArgument on empty/non-increasing/non-positive scales,
  /// non-positive frangi_b, or jerman_tau outside (0, 1].
  void validate() const;
};

/// Scale-normalised Hessian field (components multiplied by sigma^2).
struct HessianField {
  int width = 0;
  int height = 0;
  std::vector<double> xx, xy, yy;
};

/// Separable sampled Gaussian-derivative convolution, kernels truncated at
/// 4 sigma, reflect-padded borders. Exactly zero on constant images and
/// exactly equivariant under 90 degree rotations.
HessianField gaussian_hessian(const Image& img, double sigma);

/// Normalised Gaussian smoothing with the same kernels and borders as
/// gaussian_hessian; sigma <= 0 returns the input unchanged.
Image gaussian_blur(const Image& img, double sigma);

/// Closed-form eigenvalues of [[xx, xy], [xy, yy]] ordered |l1| <= |l2|.
struct Eigen2 {
  double l1;
  double l2;
};
Eigen2 hessian_eigenvalues(double xx, double xy, double yy);

/// Multi-scale raw responses before normalisation (one value per pixel).
std::vector<double> frangi_response(const Image& img, const VesselnessParams& p);
std::vector<double> jerman_response(const Image& img, const VesselnessParams& p);

/// Single-scale raw responses; the multi-scale versions take their
/// per-pixel maximum.
std::vector<double> frangi_single_scale(const HessianField& h, const VesselnessParams& p);
std::vector<double> jerman_single_scale(const HessianField& h, const VesselnessParams& p);

/// Min-max rescale into a byte-range image; all-equal input maps to 0.
Image normalize_to_byte(const std::vector<double>& response, int width, int height);

Image frangi(const Image& img, const VesselnessParams& p);
Image jerman(const Image& img, const VesselnessParams& p);

/// Gradient components with the standard 3x3 kernels, reflect padding.
struct Gradient {
  std::vector<double> gx, gy;
};
Gradient prewitt_gradient(const Image& img);
Gradient sobel_gradient(const Image& img);
std::vector<double> gradient_magnitude(const Gradient& g);

Image prewitt(const Image& img);
Image sobel(const Image& img);

/// Base image plus the structural features in canonical order
/// (Frangi, Jerman, Prewitt, Sobel), each in [0, 255] with structure bright.
struct FeatureStack {
  Image base;
  std::vector<Image> features;
  int n() const { return static_cast<int>(features.size()); }
};

inline constexpr int kFeatureCount = 4;
inline constexpr const char* kFeatureNames[kFeatureCount] = {"frangi", "jerman", "prewitt",
                                                             "sobel"};

FeatureStack extract_stack(const Image& img, const VesselnessParams& p);

}  // namespace tubuda
