#include "fuit/image.hpp"

#include <algorithm>
#include <cmath>

namespace fuit {

ImageU8::ImageU8(std::size_t r, std::size_t c, std::vector<std::uint8_t> px)
    : rows(r), cols(c), pixels(std::move(px)) {
  if (pixels.size() != rows * cols) {
    throw InvalidParameter("image has " + std::to_string(pixels.size()) + " pixels, expected " +
                           std::to_string(rows * cols));
  }
}

std::vector<double> IndexImage::normalized() const {
  std::vector<double> out(indices.size());
  const double scale = 1.0 / static_cast<double>(levels);
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = indices[i] * scale;
  return out;
}

double unit_to_pixel(double unit) {
  double v = unit * 255.0;
  double nearest = std::round(v);
  if (std::abs(v - nearest) < 1e-9) v = nearest;
  return std::clamp(v, 0.0, 255.0);
}

}  // namespace fuit
