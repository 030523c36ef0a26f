#pragma once

#include <span>
#include <vector>

#include "fuit/tensor.hpp"

namespace fuit::nn {

/// Row-wise softmax of a [N, k] logit tensor (max-shifted).
Tensor softmax(const Tensor& logits);

/// Mean over the batch of -log softmax(logits)[label]. Throws NonFiniteError
/// on NaN/inf logits and std::out_of_range on a bad label.
double cross_entropy(const Tensor& logits, std::span<const int> labels);

/// d(mean cross-entropy)/d(logits) = (softmax - onehot) / N.
Tensor cross_entropy_grad(const Tensor& logits, std::span<const int> labels);

/// Argmax per row; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace fuit::nn
