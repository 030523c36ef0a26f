#include "fuit/testbed.hpp"

#include <algorithm>
#include <cmath>

#include "fuit/rng.hpp"

namespace fuit::harness {

namespace {

struct Ellipse {
  double cy, cx, ry, rx;
  // 1 inside, 0 outside, with a one-pixel soft edge.
  double cover(double y, double x) const {
    double dy = (y - cy) / ry, dx = (x - cx) / rx;
    double r = std::sqrt(dy * dy + dx * dx);
    double edge = 1.0 / std::min(ry, rx);
    return std::clamp((1.0 - r) / edge + 0.5, 0.0, 1.0);
  }
};

}  // namespace

Dataset make_testbed(const TestbedConfig& cfg) {
  if (cfg.size == 0 || cfg.rows < 8 || cfg.cols < 8) {
    throw DatasetError("testbed needs at least one image of 8x8 or more");
  }
  Dataset data;
  data.class_names = {"normal", "opacity"};
  data.sources = {{"synthetic:radiograph seed=" + std::to_string(cfg.seed) + " n=" + std::to_string(cfg.size) +
                       " " + std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols),
                   ""}};
  const double h = static_cast<double>(cfg.rows), w = static_cast<double>(cfg.cols);

  for (std::size_t n = 0; n < cfg.size; ++n) {
    Rng rng(derive_seed(cfg.seed, {n}));
    const int label = static_cast<int>(n % 2);

    const double contrast = rng.uniform(0.85, 1.15);
    const double offset = rng.uniform(-0.05, 0.05);
    const double body_level = rng.uniform(0.50, 0.60);
    const double lung_level = rng.uniform(0.20, 0.30);
    const double shift_y = rng.uniform(-1.0, 1.0), shift_x = rng.uniform(-1.0, 1.0);

    Ellipse body{h * 0.55 + shift_y, w * 0.5 + shift_x, h * rng.uniform(0.46, 0.52), w * rng.uniform(0.42, 0.48)};
    Ellipse lungs[2];
    for (int side = 0; side < 2; ++side) {
      double cx = w * (side == 0 ? 0.31 : 0.69) + shift_x + rng.uniform(-0.5, 0.5);
      lungs[side] = {h * 0.5 + shift_y + rng.uniform(-0.5, 0.5), cx, h * rng.uniform(0.27, 0.33),
                     w * rng.uniform(0.13, 0.17)};
    }
    const double rib_freq = rng.uniform(0.9, 1.3);
    const double rib_phase = rng.uniform(0.0, 6.283185307179586);
    const double rib_amp = rng.uniform(0.02, 0.05);

    struct Blob {
      double cy, cx, sigma, amp;
    };
    std::vector<Blob> blobs;
    if (label == 1) {
      int count = 1 + static_cast<int>(rng.below(3));
      for (int b = 0; b < count; ++b) {
        const Ellipse& lung = lungs[rng.below(2)];
        double a = rng.uniform(0.0, 6.283185307179586), r = std::sqrt(rng.uniform()) * 0.6;
        blobs.push_back({lung.cy + r * lung.ry * std::sin(a), lung.cx + r * lung.rx * std::cos(a),
                         rng.uniform(1.5, 3.0), rng.uniform(0.12, 0.25)});
      }
    }

    ImageU8 img(cfg.rows, cfg.cols);
    for (std::size_t y = 0; y < cfg.rows; ++y) {
      for (std::size_t x = 0; x < cfg.cols; ++x) {
        const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
        double v = 0.05 + (body_level - 0.05) * body.cover(py, px);
        double lung = std::max(lungs[0].cover(py, px), lungs[1].cover(py, px));
        v += (lung_level - body_level) * lung;
        v += lung * rib_amp * std::sin(rib_freq * py * 2.0 + rib_phase);
        v += 0.04 * (py / h - 0.5);  // soft vertical gradient
        for (const auto& b : blobs) {
          double d2 = (py - b.cy) * (py - b.cy) + (px - b.cx) * (px - b.cx);
          v += lung * b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        }
        v = contrast * v + offset + 0.02 * rng.normal();
        img.at(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

}  // namespace fuit::harness
