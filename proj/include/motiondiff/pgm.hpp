#pragma once

#include <filesystem>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

/// Reads a binary 8-bit PGM (P5, maxval <= 255) into [h, w] values in [0, 1].
/// Throws FormatError naming the file when it is not such an image.
Tensor read_pgm(const std::filesystem::path& path);

/// Writes [h, w] values as P5 with maxval 255; values are clamped to [0, 1]
/// and rounded to the nearest level.
void write_pgm(const std::filesystem::path& path, const Tensor& frame);

}  // namespace motiondiff
