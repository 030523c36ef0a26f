#include "fuit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fuit/model.hpp"

namespace fuit::nn {

namespace {
void check_logits(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N, k], got " + shape_string(logits.shape()));
  for (double v : logits.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite logit");
  }
}

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (labels.size() != logits.dim(0)) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.dim(0)) +
                     " logit rows");
  }
  const int k = static_cast<int>(logits.dim(1));
  for (int y : labels) {
    if (y < 0 || y >= k) throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
  }
}
}  // namespace

Tensor softmax(const Tensor& logits) {
  check_logits(logits);
  Tensor out(logits.shape());
  const std::size_t k = logits.dim(1);
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    const double* z = logits.data() + n * k;
    double* p = out.data() + n * k;
    double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += (p[j] = std::exp(z[j] - m));
    for (std::size_t j = 0; j < k; ++j) p[j] /= sum;
  }
  return out;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  check_logits(logits);
  check_labels(logits, labels);
  const std::size_t k = logits.dim(1);
  double total = 0.0;
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    const double* z = logits.data() + n * k;
    double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - m);
    // -log(exp(z_c) / sum_j exp(z_j)) with the max shifted out
    total += std::log(sum) + m - z[labels[n]];
  }
  return total / static_cast<double>(logits.dim(0));
}

Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Tensor g = softmax(logits);
  const std::size_t k = logits.dim(1);
  const double inv_n = 1.0 / static_cast<double>(logits.dim(0));
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    g[n * k + static_cast<std::size_t>(labels[n])] -= 1.0;
    for (std::size_t j = 0; j < k; ++j) g[n * k + j] *= inv_n;
  }
  return g;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t k = logits.dim(1);
  std::vector<int> out(logits.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double* z = logits.data() + n * k;
    out[n] = static_cast<int>(std::max_element(z, z + k) - z);  // first max wins
  }
  return out;
}

}  // namespace fuit::nn
