#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fuit/attacks.hpp"
#include "fuit/fuzzy.hpp"
#include "fuit/image.hpp"
#include "fuit/tensor.hpp"

namespace fuit::harness {

enum class RegimeKind { kClean, kFuit, kDiscretize };

/// Input pipeline a model is trained and tested under: raw pixels, FUIT
/// indices, or hard-discretized bins. Quantized outputs are rescaled to
/// index / levels before the network.
class Regime {
 public:
  static Regime clean();
  static Regime fuit(int fuzzy_sets);
  static Regime discretize(int width);

  RegimeKind kind() const { return kind_; }
  /// R for FUIT, L for discretization, 0 for clean.
  int parameter() const { return parameter_; }
  /// "clean", "fuit-r12", "discretize-l32"
  std::string label() const;

  /// Network input for an 8-bit image.
  std::vector<double> encode(const ImageU8& img) const;
  /// Same mapping on [0,1] intensities (attacked images), in place.
  void apply(std::span<double> unit_values) const;
  /// The transform as seen by attacks (empty for clean).
  attacks::InputTransform attack_transform() const;

  /// The partition object shared by every image this regime touches.
  const FuzzyPartition* partition() const { return partition_.get(); }

 private:
  Regime(RegimeKind kind, int parameter);

  RegimeKind kind_;
  int parameter_;
  std::shared_ptr<const FuzzyPartition> partition_;
};

/// Parses "clean", "fuit" / "fuit:12", "discretize" / "discretize:32".
Regime parse_regime(const std::string& text);

/// [N, 1, rows, cols] tensor of encoded images.
nn::Tensor encode_batch(const Regime& regime, std::span<const ImageU8> images);
/// Raw [0,1] tensor (pixel / 255).
nn::Tensor unit_batch(std::span<const ImageU8> images);

}  // namespace fuit::harness
