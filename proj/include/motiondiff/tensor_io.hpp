#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "motiondiff/tensor.hpp"

namespace motiondiff {

// LMT1 blob: "LMT1", u32 rank, rank x u64 dims, row-major f64 values; all
// integers and floats little-endian.

void write_tensor(std::ostream& out, const Tensor& tensor);
/// Reads one blob. Throws FormatError on bad magic or truncated input.
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
/// Throws FormatError naming the file when it is missing or malformed.
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace motiondiff
