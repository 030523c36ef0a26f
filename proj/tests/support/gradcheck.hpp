#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "fuit/loss.hpp"
#include "fuit/model.hpp"

namespace fuit::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // coordinates skipped because +-h crossed a ReLU or max-pool switch
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Same ReLU signs and max-pool winners in every layer.
inline bool same_pattern(const nn::ModelGraph& model, const nn::Trace& a, const nn::Trace& b) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (std::holds_alternative<nn::ReLU>(model.layers()[i])) {
      const auto& x = a.inputs[i];
      const auto& y = b.inputs[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        if ((x[j] > 0.0) != (y[j] > 0.0)) return false;
      }
    }
    if (a.argmax[i] != b.argmax[i]) return false;
  }
  return true;
}

// Central differences of the mean cross-entropy against backward(), over
// every input entry and every parameter.
inline GradCheck check_gradients(nn::ModelGraph model, nn::Tensor x, std::span<const int> labels, double h = 1e-4) {
  GradCheck out;
  const auto analytic = nn::backward(model, x, labels, true);
  const auto base = nn::forward_trace(model, x);

  auto probe = [&](double& slot, double grad) {
    const double saved = slot;
    slot = saved + h;
    auto plus = nn::forward_trace(model, x);
    slot = saved - h;
    auto minus = nn::forward_trace(model, x);
    slot = saved;
    if (!same_pattern(model, base, plus) || !same_pattern(model, base, minus)) {
      ++out.kinks;
      return;
    }
    const double numeric =
        (nn::cross_entropy(plus.logits, labels) - nn::cross_entropy(minus.logits, labels)) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(grad, numeric));
    ++out.checked;
  };

  for (std::size_t j = 0; j < x.size(); ++j) probe(x[j], analytic.input[j]);
  auto params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t j = 0; j < params[p]->size(); ++j) probe((*params[p])[j], analytic.params[p][j]);
  }
  return out;
}

}  // namespace fuit::testing
