#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fuit {

/// Thrown when a caller hands an operation a parameter outside its contract.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 8-bit grayscale image, row-major.
struct ImageU8 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t r, std::size_t c, std::uint8_t fill = 0)
      : rows(r), cols(c), pixels(r * c, fill) {}
  ImageU8(std::size_t r, std::size_t c, std::vector<std::uint8_t> px);

  std::size_t size() const { return pixels.size(); }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * cols + c]; }

  bool operator==(const ImageU8&) const = default;
};

/// Output of a quantizing transform: every entry is an index in [1, levels].
struct IndexImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> indices;
  int levels = 0;  // r_used: number of distinct index values the transform can emit

  std::size_t size() const { return indices.size(); }
  int at(std::size_t r, std::size_t c) const { return indices[r * cols + c]; }

  /// Maps index k to k / levels so the network sees values in (0, 1].
  std::vector<double> normalized() const;

  bool operator==(const IndexImage&) const = default;
};

/// Converts a [0,1] intensity to the 0..255 pixel scale, snapping values that
/// are within 1e-9 of an integer so floor-based binning stays exact.
double unit_to_pixel(double unit);

}  // namespace fuit
