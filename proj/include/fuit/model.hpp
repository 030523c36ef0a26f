#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fuit/tensor.hpp"

namespace fuit::nn {

/// Raised when tensor shapes do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or gradient becomes NaN/inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Conv2D {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;  // [out, in, kh, kw]
  Tensor bias;    // [out]
};

struct Dense {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct ReLU {};

struct MaxPool2D {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct Flatten {};

using Layer = std::variant<Conv2D, Dense, ReLU, MaxPool2D, Flatten>;

std::string layer_name(const Layer& layer);

/// Feed-forward classifier. Shapes exclude the batch axis: the input shape is
/// [C, H, W] for image models or [D] for vector models.
class ModelGraph {
 public:
  ModelGraph() = default;
  /// Checks that consecutive layers compose and that parameter tensors have
  /// the shapes their layer specs imply. Throws ShapeError otherwise.
  ModelGraph(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return shapes_.back(); }
  /// Shape entering layer i (shapes_[layers.size()] is the output).
  const Shape& shape_before(std::size_t i) const { return shapes_[i]; }
  std::size_t num_classes() const { return shapes_.back().at(0); }

  const std::vector<Layer>& layers() const { return layers_; }

  /// Parameter tensors in a fixed order: for each layer, weight then bias.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

/// Fan-in scaled uniform init (He-uniform bound sqrt(6 / fan_in)), zero bias.
void initialize_parameters(ModelGraph& model, std::uint64_t seed);

/// Conv(3x3,1->8)-ReLU-MaxPool(2)-Conv(3x3,8->16)-ReLU-MaxPool(2)-Flatten-Dense(k),
/// both convolutions with padding 1. Requires rows and cols divisible by 4.
ModelGraph make_small_cnn(std::size_t rows, std::size_t cols, std::size_t classes, std::uint64_t seed);

/// Flatten-Dense(k): a linear classifier over the raw pixels.
ModelGraph make_linear(Shape input_shape, std::size_t classes, std::uint64_t seed);

/// Activations recorded during a forward pass, consumed by backpropagate.
struct Trace {
  std::vector<Tensor> inputs;                       // input to each layer
  std::vector<std::vector<std::uint32_t>> argmax;   // max-pool winners, per layer
  Tensor logits;
};

Tensor forward(const ModelGraph& model, const Tensor& batch);
Trace forward_trace(const ModelGraph& model, const Tensor& batch);

struct Gradients {
  std::vector<Tensor> params;  // same order as ModelGraph::parameters(); empty if not requested
  Tensor input;
  double loss = 0.0;
};

/// Reverse pass seeded with dL/dlogits.
Gradients backpropagate(const ModelGraph& model, const Trace& trace, const Tensor& logit_grad,
                        bool want_param_grads = true);

/// Mean softmax cross-entropy over the batch and its exact gradients with
/// respect to every parameter and the input batch.
Gradients backward(const ModelGraph& model, const Tensor& batch, std::span<const int> labels,
                   bool want_param_grads = true);

}  // namespace fuit::nn
