#include "mirror_opt/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"
#include "mirror_opt/oracle.hpp"

namespace mirror_opt {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
  if (b.size() < at + 4) throw IoError(fmt::format("{}: truncated header", path.string()));
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>((v >> 16) & 0xFF),
                              static_cast<char>((v >> 8) & 0xFF), static_cast<char>(v & 0xFF)};
  out.write(b.data(), 4);
}

ClassificationData select(const ClassificationData& data, const std::vector<Index>& keep) {
  ClassificationData out;
  out.num_classes = data.num_classes;
  out.features.resize(data.features.rows(), static_cast<Index>(keep.size()));
  out.labels.reserve(keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.features.col(static_cast<Index>(j)) = data.features.col(keep[j]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(keep[j])]);
  }
  return out;
}

}  // namespace

ClassificationData load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);
  if (be32(ib, 0, images) != kImageMagic) throw IoError(fmt::format("{}: bad IDX image magic", images.string()));
  if (be32(lb, 0, labels) != kLabelMagic) throw IoError(fmt::format("{}: bad IDX label magic", labels.string()));
  const std::size_t n = be32(ib, 4, images);
  const std::size_t rows = be32(ib, 8, images);
  const std::size_t cols = be32(ib, 12, images);
  const std::size_t nl = be32(lb, 4, labels);
  if (nl != n) throw IoError(fmt::format("{} images but {} labels", n, nl));
  const std::size_t px = rows * cols;
  if (ib.size() < 16 + n * px) throw IoError(fmt::format("{}: truncated image data", images.string()));
  if (lb.size() < 8 + n) throw IoError(fmt::format("{}: truncated label data", labels.string()));
  ClassificationData out;
  out.num_classes = 10;
  out.features.resize(static_cast<Index>(px), static_cast<Index>(n));
  out.labels.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const unsigned char* p = ib.data() + 16 + j * px;
    for (std::size_t i = 0; i < px; ++i) {
      out.features(static_cast<Index>(i), static_cast<Index>(j)) = static_cast<float>(p[i]) / 255.0f;
    }
    const int label = lb[8 + j];
    if (label > 9) throw IoError(fmt::format("{}: label {} out of range", labels.string(), label));
    out.labels[j] = label;
  }
  return out;
}

void write_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                     const ClassificationData& data, Index rows, Index cols) {
  if (rows * cols != data.feature_dim()) throw DimensionError("write_mnist_idx: image shape does not match features");
  std::ofstream im(images, std::ios::binary);
  std::ofstream lb(labels, std::ios::binary);
  if (!im || !lb) throw IoError("write_mnist_idx: cannot open output files");
  put_be32(im, kImageMagic);
  put_be32(im, static_cast<std::uint32_t>(data.size()));
  put_be32(im, static_cast<std::uint32_t>(rows));
  put_be32(im, static_cast<std::uint32_t>(cols));
  put_be32(lb, kLabelMagic);
  put_be32(lb, static_cast<std::uint32_t>(data.size()));
  for (Index j = 0; j < data.size(); ++j) {
    for (Index i = 0; i < data.feature_dim(); ++i) {
      const float v = std::clamp(data.features(i, j), 0.0f, 1.0f);
      im.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
    lb.put(static_cast<char>(data.labels[static_cast<std::size_t>(j)]));
  }
  if (!im || !lb) throw IoError("write_mnist_idx: write failed");
}

ClassificationData filter_digits(const ClassificationData& data, std::initializer_list<int> digits) {
  std::vector<Index> keep;
  for (std::size_t j = 0; j < data.labels.size(); ++j) {
    if (std::find(digits.begin(), digits.end(), data.labels[j]) != digits.end()) keep.push_back(static_cast<Index>(j));
  }
  return select(data, keep);
}

ClassificationData downscale_half(const ClassificationData& data) {
  const auto side = static_cast<Index>(std::lround(std::sqrt(static_cast<double>(data.feature_dim()))));
  if (side * side != data.feature_dim() || side % 2 != 0) {
    throw DimensionError("downscale_half: images must be square with an even side");
  }
  const Index half = side / 2;
  ClassificationData out;
  out.num_classes = data.num_classes;
  out.labels = data.labels;
  out.features.resize(half * half, data.size());
  for (Index j = 0; j < data.size(); ++j) {
    for (Index r = 0; r < half; ++r) {
      for (Index c = 0; c < half; ++c) {
        const auto at = [&](Index rr, Index cc) { return data.features(rr * side + cc, j); };
        out.features(r * half + c, j) =
            0.25f * (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1));
      }
    }
  }
  return out;
}

SvmData make_svm_features(const ClassificationData& data, std::uint64_t seed) {
  if (data.size() == 0) throw ConfigError("make_svm_features: empty dataset");
  const Index n = data.feature_dim();
  auto rng = make_rng(seed, 0x5356);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  Matrix w(kSvmFeatureDim, n);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  Vector bias(kSvmFeatureDim);
  for (Index i = 0; i < kSvmFeatureDim; ++i) bias[i] = uniform(rng);
  SvmData out;
  out.features = ((w * data.features.cast<double>()).colwise() + bias).array().tanh().transpose();
  out.labels.resize(data.size());
  for (Index j = 0; j < data.size(); ++j) {
    const int l = data.labels[static_cast<std::size_t>(j)];
    if (l != 4 && l != 9) throw ConfigError(fmt::format("make_svm_features: label {} is neither 4 nor 9", l));
    out.labels[j] = l == 9 ? 1.0 : -1.0;
  }
  return out;
}

ClassificationData make_moons(Index per_moon, double noise, std::uint64_t seed) {
  if (per_moon < 1) throw ConfigError("make_moons: need at least one point per moon");
  if (!(noise >= 0.0)) throw ConfigError("make_moons: noise must be >= 0");
  ClassificationData out;
  out.num_classes = 2;
  out.features.resize(2, 2 * per_moon);
  out.labels.resize(static_cast<std::size_t>(2 * per_moon));
  auto rng = make_rng(seed, 0x4D4F);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < per_moon; ++i) {
    const double theta = per_moon == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(per_moon - 1);
    out.features(0, i) = static_cast<float>(std::cos(theta));
    out.features(1, i) = static_cast<float>(std::sin(theta));
    out.features(0, per_moon + i) = static_cast<float>(1.0 - std::cos(theta));
    out.features(1, per_moon + i) = static_cast<float>(0.5 - std::sin(theta));
    out.labels[static_cast<std::size_t>(i)] = 0;
    out.labels[static_cast<std::size_t>(per_moon + i)] = 1;
  }
  if (noise > 0.0) {
    for (Index i = 0; i < out.features.size(); ++i) out.features.data()[i] += static_cast<float>(noise * normal(rng));
  }
  return out;
}

Phantom generate_ellipse_phantom(const EllipsePhantomSpec& spec) {
  if (spec.height < 1 || spec.width < 1) throw DimensionError("phantom: zero-size image");
  if (spec.min_ellipses < 0 || spec.max_ellipses < spec.min_ellipses) throw ConfigError("phantom: bad ellipse count");
  if (!(spec.min_intensity <= spec.max_intensity) || !(spec.noise_std >= 0.0)) {
    throw ConfigError("phantom: bad intensity range or noise level");
  }
  auto rng = make_rng(spec.seed, 0x454C);
  std::uniform_int_distribution<int> count(spec.min_ellipses, spec.max_ellipses);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Phantom out;
  out.clean = Matrix::Zero(spec.height, spec.width);
  const int ellipses = count(rng);
  for (int e = 0; e < ellipses; ++e) {
    // Geometry in normalized coordinates [-1, 1]^2.
    const double cx = -0.7 + 1.4 * unit(rng);
    const double cy = -0.7 + 1.4 * unit(rng);
    const double a = 0.05 + 0.45 * unit(rng);
    const double b = 0.05 + 0.45 * unit(rng);
    const double phi = std::numbers::pi * unit(rng);
    const double value = spec.min_intensity + (spec.max_intensity - spec.min_intensity) * unit(rng);
    const double cp = std::cos(phi);
    const double sp = std::sin(phi);
    for (Index r = 0; r < spec.height; ++r) {
      const double y = 2.0 * (static_cast<double>(r) + 0.5) / static_cast<double>(spec.height) - 1.0;
      for (Index c = 0; c < spec.width; ++c) {
        const double x = 2.0 * (static_cast<double>(c) + 0.5) / static_cast<double>(spec.width) - 1.0;
        const double u = (x - cx) * cp + (y - cy) * sp;
        const double v = -(x - cx) * sp + (y - cy) * cp;
        if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) out.clean(r, c) += value;
      }
    }
  }
  out.clean = out.clean.cwiseMax(0.0).cwiseMin(1.0);
  out.noisy = out.clean;
  const double sigma = spec.noise_std * spec.max_intensity;
  if (sigma > 0.0) {
    auto noise_rng = make_rng(spec.seed, 0x4E4F);
    std::normal_distribution<double> normal(0.0, sigma);
    for (Index i = 0; i < out.noisy.size(); ++i) out.noisy.data()[i] += normal(noise_rng);
    out.noisy = out.noisy.cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

Matrix random_mask(Index height, Index width, double missing_fraction, std::uint64_t seed) {
  if (height < 1 || width < 1) throw DimensionError("random_mask: zero-size image");
  if (!(missing_fraction >= 0.0 && missing_fraction <= 1.0)) throw ConfigError("random_mask: fraction outside [0, 1]");
  const Index n = height * width;
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  auto rng = make_rng(seed, 0x4D41);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix mask = Matrix::Ones(height, width);
  const auto missing = static_cast<Index>(std::llround(missing_fraction * static_cast<double>(n)));
  for (Index i = 0; i < missing; ++i) mask.data()[perm[static_cast<std::size_t>(i)]] = 0.0;
  return mask;
}

}  // namespace mirror_opt
