#include "motiondiff/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "motiondiff/errors.hpp"

namespace motiondiff {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

long header_number(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  return std::stol(tok);
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  if (header_token(in) != "P5") throw FormatError(path.string() + ": not a binary PGM (P5) file");
  const long width = header_number(in, path);
  const long height = header_number(in, path);
  const long maxval = header_number(in, path);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw FormatError(path.string() + ": unsupported PGM dimensions or maxval");
  }
  const auto h = static_cast<std::size_t>(height);
  const auto w = static_cast<std::size_t>(width);
  std::vector<unsigned char> bytes(h * w);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  std::vector<double> values(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) values[i] = static_cast<double>(bytes[i]) / static_cast<double>(maxval);
  return Tensor(Shape{h, w}, std::move(values));
}

void write_pgm(const std::filesystem::path& path, const Tensor& frame) {
  if (frame.rank() != 2) throw DimensionError("write_pgm: expected [h, w], got " + shape_to_string(frame.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << frame.dim(1) << ' ' << frame.dim(0) << "\n255\n";
  std::vector<unsigned char> bytes(frame.numel());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(frame.data()[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace motiondiff
