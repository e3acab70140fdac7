#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>

#include "mirror_opt/networks.hpp"
#include "mirror_opt/types.hpp"

namespace mirror_opt {

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801). Pixels are scaled
/// to [0, 1] and stored one image per column, row-major within the image.
ClassificationData load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes the IDX pair; pixel values are rounded to 0..255. Used to build fixtures.
void write_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                     const ClassificationData& data, Index rows, Index cols);

/// Samples whose label is one of the given digits, in their original order.
ClassificationData filter_digits(const ClassificationData& data, std::initializer_list<int> digits);

/// 2x2 average pooling of square images with an even side.
ClassificationData downscale_half(const ClassificationData& data);

struct SvmData {
  Matrix features;  // m x 50
  Vector labels;    // +-1
};

inline constexpr Index kSvmFeatureDim = 50;

/// phi = tanh(W x + c) with W ~ N(0, 1/n) and c ~ U(-0.5, 0.5) drawn from the seed; digit 4
/// maps to -1 and digit 9 to +1. Other labels are rejected.
SvmData make_svm_features(const ClassificationData& data, std::uint64_t seed);

/// Two interleaved half circles with N(0, noise^2) jitter; labels 0 (outer) and 1 (inner).
ClassificationData make_moons(Index per_moon, double noise, std::uint64_t seed);

struct EllipsePhantomSpec {
  Index height = 128;
  Index width = 128;
  int min_ellipses = 3;
  int max_ellipses = 8;
  double min_intensity = 0.1;
  double max_intensity = 0.5;
  /// Noise standard deviation as a fraction of max_intensity.
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};

struct Phantom {
  Matrix clean;
  Matrix noisy;
};

/// Sum of random filled ellipses clipped to [0, 1], plus clipped Gaussian noise.
Phantom generate_ellipse_phantom(const EllipsePhantomSpec& spec);

/// Binary H x W mask with round(fraction * H * W) zeros at seeded positions.
Matrix random_mask(Index height, Index width, double missing_fraction, std::uint64_t seed);

}  // namespace mirror_opt
