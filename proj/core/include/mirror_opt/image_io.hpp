#pragma once

#include <filesystem>

#include "mirror_opt/types.hpp"

namespace mirror_opt {

/// 8-bit binary PGM (P5). Values are clipped to [0, 1] and scaled to 0..255 on write;
/// reading scales by 1/maxval. Matrices are H x W.
void write_pgm(const std::filesystem::path& path, const Matrix& image);
Matrix read_pgm(const std::filesystem::path& path);

/// Lossless float32 exchange: "MOPT", u32 H, u32 W, u32 reserved, then H*W little-endian
/// floats in row-major order.
void write_raw(const std::filesystem::path& path, const Matrix& image);
Matrix read_raw(const std::filesystem::path& path);

}  // namespace mirror_opt
