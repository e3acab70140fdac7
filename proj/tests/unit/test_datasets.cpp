#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "mirror_opt/datasets.hpp"
#include "mirror_opt/error.hpp"
#include "mirror_opt/image_io.hpp"

namespace fs = std::filesystem;
namespace mo = mirror_opt;
using mo::Index;
using mo::Matrix;
using mo::Vector;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("mirror_opt_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const char* name) const { return path_ / name; }

 private:
  fs::path path_;
};

mo::ClassificationData tiny_digits(int n, Index side) {
  gen::Source src(80);
  mo::ClassificationData d;
  d.num_classes = 10;
  d.features.resize(side * side, n);
  for (int i = 0; i < n; ++i) {
    for (Index p = 0; p < side * side; ++p) d.features(p, i) = static_cast<float>(src.index(0, 255)) / 255.0f;
    d.labels.push_back(i % 10);
  }
  return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Mnist, IdxRoundTrip) {
  TempDir dir;
  const auto d = tiny_digits(12, 4);
  mo::write_mnist_idx(dir / "img", dir / "lbl", d, 4, 4);
  const auto back = mo::load_mnist_idx(dir / "img", dir / "lbl");
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.num_classes, 10);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(fs::file_size(dir / "img"), 16u + 12u * 16u);
}

TEST(Mnist, PixelLayoutIsRowMajorPerColumn) {
  TempDir dir;
  // 2x3 image with pixel bytes 0..5 in file order.
  write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 51, 102, 153, 204, 255});
  write_bytes(dir / "lbl", {0, 0, 8, 1, 0, 0, 0, 1, 7});
  const auto d = mo::load_mnist_idx(dir / "img", dir / "lbl");
  ASSERT_EQ(d.features.rows(), 6);
  EXPECT_FLOAT_EQ(d.features(1, 0), 51.0f / 255.0f);
  EXPECT_FLOAT_EQ(d.features(5, 0), 1.0f);
  EXPECT_EQ(d.labels, std::vector<int>{7});
}

TEST(Mnist, MalformedFiles) {
  TempDir dir;
  const auto d = tiny_digits(3, 2);
  mo::write_mnist_idx(dir / "img", dir / "lbl", d, 2, 2);
  write_bytes(dir / "bad", {0, 0, 8, 4, 0, 0, 0, 1});
  EXPECT_THROW(mo::load_mnist_idx(dir / "bad", dir / "lbl"), mo::IoError);
  EXPECT_THROW(mo::load_mnist_idx(dir / "img", dir / "missing"), mo::IoError);
  fs::resize_file(dir / "img", fs::file_size(dir / "img") - 1);
  EXPECT_THROW(mo::load_mnist_idx(dir / "img", dir / "lbl"), mo::IoError);
  mo::write_mnist_idx(dir / "img", dir / "lbl", tiny_digits(4, 2), 2, 2);
  mo::write_mnist_idx(dir / "img3", dir / "lbl3", d, 2, 2);
  EXPECT_THROW(mo::load_mnist_idx(dir / "img", dir / "lbl3"), mo::IoError);
}

TEST(Datasets, FilterAndDownscale) {
  const auto d = tiny_digits(30, 4);
  const auto f = mo::filter_digits(d, {4, 9});
  EXPECT_EQ(f.labels, (std::vector<int>{4, 9, 4, 9, 4, 9}));
  EXPECT_EQ(f.features.col(1), d.features.col(9));
  const auto h = mo::downscale_half(d);
  ASSERT_EQ(h.features.rows(), 4);
  // Top-left output pixel averages input pixels (0,0), (0,1), (1,0), (1,1).
  const float expect = (d.features(0, 3) + d.features(1, 3) + d.features(4, 3) + d.features(5, 3)) / 4.0f;
  EXPECT_FLOAT_EQ(h.features(0, 3), expect);
  EXPECT_THROW(mo::downscale_half(tiny_digits(2, 3)), mo::DimensionError);
}

TEST(Datasets, SvmFeatures) {
  auto d = mo::filter_digits(tiny_digits(40, 4), {4, 9});
  d.features.col(0).setZero();
  d.features.col(2).setZero();
  const auto a = mo::make_svm_features(d, 5);
  ASSERT_EQ(a.features.rows(), 8);
  ASSERT_EQ(a.features.cols(), mo::kSvmFeatureDim);
  EXPECT_EQ(a.labels[0], -1.0);
  EXPECT_EQ(a.labels[1], 1.0);
  // A blank image sees only the bias: phi = tanh(c) with |c| < 0.5.
  EXPECT_EQ(a.features.row(0), a.features.row(2));
  EXPECT_LT(a.features.row(0).cwiseAbs().maxCoeff(), std::tanh(0.5));
  EXPECT_EQ(mo::make_svm_features(d, 5).features, a.features);
  EXPECT_NE(mo::make_svm_features(d, 6).features, a.features);
  EXPECT_THROW(mo::make_svm_features(tiny_digits(3, 4), 5), mo::ConfigError);
}

TEST(Datasets, Moons) {
  const auto m = mo::make_moons(50, 0.0, 1);
  ASSERT_EQ(m.size(), 100);
  EXPECT_EQ(m.feature_dim(), 2);
  for (Index i = 0; i < m.size(); ++i) {
    const double x = m.features(0, i);
    const double y = m.features(1, i);
    // Without noise the samples lie on the two unit half circles.
    if (m.labels[static_cast<std::size_t>(i)] == 0) {
      EXPECT_NEAR(x * x + y * y, 1.0, 1e-6);
    } else {
      EXPECT_NEAR((x - 1.0) * (x - 1.0) + (y - 0.5) * (y - 0.5), 1.0, 1e-6);
    }
  }
  const auto a = mo::make_moons(20, 0.1, 3);
  EXPECT_EQ(a.features, mo::make_moons(20, 0.1, 3).features);
  EXPECT_NE(a.features, mo::make_moons(20, 0.1, 4).features);
}

TEST(Datasets, Phantom) {
  mo::EllipsePhantomSpec spec;
  spec.height = 32;
  spec.width = 24;
  spec.seed = 9;
  const auto p = mo::generate_ellipse_phantom(spec);
  EXPECT_EQ(p.clean.rows(), 32);
  EXPECT_EQ(p.clean.cols(), 24);
  EXPECT_GE(p.noisy.minCoeff(), 0.0);
  EXPECT_LE(p.noisy.maxCoeff(), 1.0);
  EXPECT_GT(p.clean.maxCoeff(), 0.0);
  const auto q = mo::generate_ellipse_phantom(spec);
  EXPECT_EQ(p.noisy, q.noisy);
  spec.noise_std = 0.0;
  const auto quiet = mo::generate_ellipse_phantom(spec);
  EXPECT_EQ(quiet.noisy, quiet.clean);
  EXPECT_EQ(quiet.clean, p.clean);
  spec.min_ellipses = 0;
  spec.max_ellipses = 0;
  EXPECT_EQ(mo::generate_ellipse_phantom(spec).clean, Matrix::Zero(32, 24));
  spec.max_ellipses = -1;
  EXPECT_THROW(mo::generate_ellipse_phantom(spec), mo::ConfigError);
}

TEST(Datasets, MaskFraction) {
  const Matrix m = mo::random_mask(10, 7, 0.1, 2);
  EXPECT_EQ((m.array() == 0.0).count(), 7);
  EXPECT_EQ((m.array() == 1.0).count(), 63);
  EXPECT_EQ(m, mo::random_mask(10, 7, 0.1, 2));
  EXPECT_EQ(mo::random_mask(4, 4, 0.0, 1), Matrix::Ones(4, 4));
  EXPECT_THROW(mo::random_mask(4, 4, 1.5, 1), mo::ConfigError);
}

TEST(ImageIo, PgmRoundTripQuantizes) {
  TempDir dir;
  gen::Source src(81);
  const Matrix img = src.uniform_vector(35, -0.2, 1.2).reshaped(5, 7);
  mo::write_pgm(dir / "a.pgm", img);
  const Matrix back = mo::read_pgm(dir / "a.pgm");
  ASSERT_EQ(back.rows(), 5);
  ASSERT_EQ(back.cols(), 7);
  EXPECT_LE((back - img.cwiseMax(0.0).cwiseMin(1.0)).cwiseAbs().maxCoeff(), 0.5 / 255.0 + 1e-12);
}

TEST(ImageIo, RawRoundTripIsFloatExact) {
  TempDir dir;
  gen::Source src(82);
  const Matrix img = src.normal_vector(12).reshaped(3, 4);
  mo::write_raw(dir / "a.raw", img);
  const Matrix back = mo::read_raw(dir / "a.raw");
  EXPECT_EQ(back, img.cast<float>().cast<double>());
}

TEST(ImageIo, BadMagic) {
  TempDir dir;
  write_bytes(dir / "x.pgm", {'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', '0'});
  EXPECT_THROW(mo::read_pgm(dir / "x.pgm"), mo::IoError);
  write_bytes(dir / "x.raw", {'M', 'O', 'P', 'X', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_THROW(mo::read_raw(dir / "x.raw"), mo::IoError);
  EXPECT_THROW(mo::read_raw(dir / "nothing.raw"), mo::IoError);
}
