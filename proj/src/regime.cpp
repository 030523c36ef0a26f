#include "fuit/regime.hpp"

#include <stdexcept>

namespace fuit::harness {

Regime::Regime(RegimeKind kind, int parameter) : kind_(kind), parameter_(parameter) {}

Regime Regime::clean() { return Regime(RegimeKind::kClean, 0); }

Regime Regime::fuit(int fuzzy_sets) {
  if (fuzzy_sets < 2 || fuzzy_sets > 255) {
    throw InvalidParameter("FUIT needs 2..255 fuzzy sets, got " + std::to_string(fuzzy_sets));
  }
  Regime r(RegimeKind::kFuit, fuzzy_sets);
  r.partition_ = std::make_shared<const FuzzyPartition>(build_uniform_partition(fuzzy_sets));
  return r;
}

Regime Regime::discretize(int width) {
  discretize_levels(width);  // validates
  return Regime(RegimeKind::kDiscretize, width);
}

std::string Regime::label() const {
  switch (kind_) {
    case RegimeKind::kClean: return "clean";
    case RegimeKind::kFuit: return "fuit-r" + std::to_string(parameter_);
    case RegimeKind::kDiscretize: return "discretize-l" + std::to_string(parameter_);
  }
  return "?";
}

std::vector<double> Regime::encode(const ImageU8& img) const {
  switch (kind_) {
    case RegimeKind::kClean: {
      std::vector<double> out(img.size());
      for (std::size_t i = 0; i < img.size(); ++i) out[i] = img.pixels[i] / 255.0;
      return out;
    }
    case RegimeKind::kFuit: return fuit_image(*partition_, img).normalized();
    case RegimeKind::kDiscretize: return hard_discretize(img, parameter_).normalized();
  }
  return {};
}

void Regime::apply(std::span<double> unit_values) const {
  switch (kind_) {
    case RegimeKind::kClean: return;
    case RegimeKind::kFuit: {
      const double scale = 1.0 / static_cast<double>(partition_->size());
      for (auto& v : unit_values) v = fuit_value(*partition_, unit_to_pixel(v)).index * scale;
      return;
    }
    case RegimeKind::kDiscretize: {
      const double scale = 1.0 / discretize_levels(parameter_);
      for (auto& v : unit_values) v = discretize_value(unit_to_pixel(v), parameter_) * scale;
      return;
    }
  }
}

attacks::InputTransform Regime::attack_transform() const {
  if (kind_ == RegimeKind::kClean) return {};
  Regime self = *this;
  return [self](std::span<double> values) { self.apply(values); };
}

Regime parse_regime(const std::string& text) {
  auto colon = text.find(':');
  std::string name = text.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto number = [&](int fallback) {
    if (arg.empty()) return fallback;
    std::size_t used = 0;
    int v = std::stoi(arg, &used);
    if (used != arg.size()) throw std::invalid_argument("bad regime parameter '" + arg + "'");
    return v;
  };
  if (name == "clean" && arg.empty()) return Regime::clean();
  if (name == "fuit") return Regime::fuit(number(kDefaultFuzzySets));
  if (name == "discretize") return Regime::discretize(number(kDefaultDiscretizeWidth));
  throw std::invalid_argument("unknown transform '" + text + "' (expected clean, fuit[:R] or discretize[:L])");
}

nn::Tensor encode_batch(const Regime& regime, std::span<const ImageU8> images) {
  if (images.empty()) return nn::Tensor({0, 1, 0, 0});
  const std::size_t rows = images[0].rows, cols = images[0].cols, d = rows * cols;
  nn::Tensor out({images.size(), 1, rows, cols});
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto enc = regime.encode(images[i]);
    std::copy(enc.begin(), enc.end(), out.data() + i * d);
  }
  return out;
}

nn::Tensor unit_batch(std::span<const ImageU8> images) { return encode_batch(Regime::clean(), images); }

}  // namespace fuit::harness
