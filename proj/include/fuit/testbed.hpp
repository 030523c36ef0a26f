#pragma once

#include <cstdint>

#include "fuit/dataset.hpp"

namespace fuit::harness {

struct TestbedConfig {
  std::size_t size = 2000;
  std::size_t rows = 16;
  std::size_t cols = 16;
  std::uint64_t seed = 7;
};

/// Seeded two-class corpus of small synthetic radiograph-like images: a body
/// silhouette with two darker lung fields, rib banding and sensor noise.
/// Class 1 ("opacity") adds one to three soft bright blobs inside the lung
/// fields. Classes alternate, so the corpus is balanced.
Dataset make_testbed(const TestbedConfig& cfg);

}  // namespace fuit::harness
