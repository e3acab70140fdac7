#include "mirror_opt/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mirror_opt/error.hpp"

namespace mirror_opt {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  return in;
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c) == 0) {
      break;
    }
    c = in.get();
  }
  while (c != EOF && std::isspace(c) == 0 && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Matrix& image) {
  if (image.size() == 0) throw DimensionError("write_pgm: empty image");
  auto out = open_out(path);
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.cols()));
  for (Index r = 0; r < image.rows(); ++r) {
    for (Index c = 0; c < image.cols(); ++c) {
      const double v = std::isfinite(image(r, c)) ? std::clamp(image(r, c), 0.0, 1.0) : 0.0;
      row[static_cast<std::size_t>(c)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

Matrix read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (pgm_token(in) != "P5") throw IoError(fmt::format("{}: not a binary PGM", path.string()));
  long w = 0;
  long h = 0;
  long maxval = 0;
  try {
    w = std::stol(pgm_token(in));
    h = std::stol(pgm_token(in));
    maxval = std::stol(pgm_token(in));
  } catch (const std::exception&) {
    throw IoError(fmt::format("{}: malformed PGM header", path.string()));
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError(fmt::format("{}: unsupported PGM header", path.string()));
  }
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> data(static_cast<std::size_t>(w * h) * bytes_per);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw IoError(fmt::format("{}: truncated PGM data", path.string()));
  }
  Matrix img(h, w);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * w + c) * bytes_per;
      const unsigned v = bytes_per == 2 ? (static_cast<unsigned>(data[i]) << 8) | data[i + 1] : data[i];
      img(r, c) = static_cast<double>(v) / static_cast<double>(maxval);
    }
  }
  return img;
}

void write_raw(const std::filesystem::path& path, const Matrix& image) {
  if (image.rows() > 0xFFFFFFFFL || image.cols() > 0xFFFFFFFFL) throw DimensionError("write_raw: image too large");
  auto out = open_out(path);
  out.write("MOPT", 4);
  put_u32_le(out, static_cast<std::uint32_t>(image.rows()));
  put_u32_le(out, static_cast<std::uint32_t>(image.cols()));
  put_u32_le(out, 0);
  for (Index r = 0; r < image.rows(); ++r) {
    for (Index c = 0; c < image.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image(r, c)));
      put_u32_le(out, bits);
    }
  }
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

Matrix read_raw(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<unsigned char, 16> header{};
  in.read(reinterpret_cast<char*>(header.data()), 16);
  if (in.gcount() != 16) throw IoError(fmt::format("{}: truncated header", path.string()));
  if (std::memcmp(header.data(), "MOPT", 4) != 0) throw IoError(fmt::format("{}: bad magic", path.string()));
  const std::uint32_t h = get_u32_le(header.data() + 4);
  const std::uint32_t w = get_u32_le(header.data() + 8);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<unsigned char> data(n * 4);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size())) {
    throw IoError(fmt::format("{}: truncated data", path.string()));
  }
  Matrix img(static_cast<Index>(h), static_cast<Index>(w));
  for (std::size_t i = 0; i < n; ++i) {
    img(static_cast<Index>(i / w), static_cast<Index>(i % w)) =
        static_cast<double>(std::bit_cast<float>(get_u32_le(data.data() + 4 * i)));
  }
  return img;
}

}  // namespace mirror_opt
