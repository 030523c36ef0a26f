#include "fuit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "fuit/loss.hpp"
#include "fuit/rng.hpp"

namespace fuit::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

void expect_shape(const Tensor& t, const Shape& s, const std::string& what) {
  if (t.shape() != s) {
    throw ShapeError(what + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(s));
  }
}

Shape output_shape_of(const Layer& layer, const Shape& in, std::size_t index) {
  auto where = "layer " + std::to_string(index) + " (" + layer_name(layer) + ")";
  return std::visit(
      Overloaded{
          [&](const Conv2D& c) -> Shape {
            if (in.size() != 3 || in[0] != c.in_channels) {
              throw ShapeError(where + " expects [" + std::to_string(c.in_channels) +
                               ", H, W] input, got " + shape_string(in));
            }
            if (c.stride == 0) throw ShapeError(where + " has zero stride");
            expect_shape(c.weight, {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}, where + " weight");
            expect_shape(c.bias, {c.out_channels}, where + " bias");
            Shape out{c.out_channels, conv_out(in[1], c.kernel_h, c.stride, c.padding),
                      conv_out(in[2], c.kernel_w, c.stride, c.padding)};
            if (out[1] == 0 || out[2] == 0) throw ShapeError(where + " kernel larger than padded input");
            return out;
          },
          [&](const Dense& d) -> Shape {
            if (in.size() != 1 || in[0] != d.in_features) {
              throw ShapeError(where + " expects [" + std::to_string(d.in_features) + "] input, got " +
                               shape_string(in));
            }
            expect_shape(d.weight, {d.out_features, d.in_features}, where + " weight");
            expect_shape(d.bias, {d.out_features}, where + " bias");
            return {d.out_features};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool2D& p) -> Shape {
            if (in.size() != 3) throw ShapeError(where + " expects [C, H, W] input, got " + shape_string(in));
            if (p.window == 0 || p.stride == 0) throw ShapeError(where + " has zero window or stride");
            Shape out{in[0], conv_out(in[1], p.window, p.stride, 0), conv_out(in[2], p.window, p.stride, 0)};
            if (out[1] == 0 || out[2] == 0) throw ShapeError(where + " window larger than input");
            return out;
          },
          [&](const Flatten&) -> Shape { return {element_count(in)}; },
      },
      layer);
}

// ---- per-layer kernels ---------------------------------------------------

// Range of output positions o with 0 <= o*stride - pad + k < extent.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                std::size_t stride, std::size_t pad, std::size_t k) {
  long lo = static_cast<long>(pad) - static_cast<long>(k);
  long first = lo <= 0 ? 0 : (lo + static_cast<long>(stride) - 1) / static_cast<long>(stride);
  long hi = static_cast<long>(in_extent) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  if (hi < 0) return {0, 0};
  long last = hi / static_cast<long>(stride);
  last = std::min<long>(last, static_cast<long>(out_extent) - 1);
  if (first > last) return {0, 0};
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last) + 1};
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMatrix>;
using ConstMapRow = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t n, h, w, oh, ow, taps;  // taps = in_channels * kernel_h * kernel_w
};

ConvGeometry geometry(const Conv2D& c, const Tensor& x, std::size_t oh, std::size_t ow) {
  return {x.dim(0), x.dim(2), x.dim(3), oh, ow, c.in_channels * c.kernel_h * c.kernel_w};
}

// Column matrix [taps, n * oh * ow]; out-of-image taps stay zero.
RowMatrix im2col(const Conv2D& c, const ConvGeometry& g, const double* x) {
  const std::size_t plane = g.oh * g.ow, cols = g.n * plane;
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(g.taps), static_cast<Eigen::Index>(cols));
  for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
    for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
      auto [oy0, oy1] = valid_range(g.oh, g.h, c.stride, c.padding, ky);
      for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
        auto [ox0, ox1] = valid_range(g.ow, g.w, c.stride, c.padding, kx);
        if (ox0 == ox1) continue;
        const std::size_t tap = (ic * c.kernel_h + ky) * c.kernel_w + kx;
        const std::size_t col0 = ox0 * c.stride + kx - c.padding;
        double* dst_row = out.data() + tap * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* in = x + (n * c.in_channels + ic) * g.h * g.w;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const double* src = in + (oy * c.stride + ky - c.padding) * g.w + col0;
            double* dst = dst_row + n * plane + oy * g.ow + ox0;
            for (std::size_t j = 0; j < ox1 - ox0; ++j) dst[j] = src[j * c.stride];
          }
        }
      }
    }
  }
  return out;
}

void col2im_add(const Conv2D& c, const ConvGeometry& g, const RowMatrix& cols_m, double* dx) {
  const std::size_t plane = g.oh * g.ow, cols = g.n * plane;
  for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
    for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
      auto [oy0, oy1] = valid_range(g.oh, g.h, c.stride, c.padding, ky);
      for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
        auto [ox0, ox1] = valid_range(g.ow, g.w, c.stride, c.padding, kx);
        if (ox0 == ox1) continue;
        const std::size_t tap = (ic * c.kernel_h + ky) * c.kernel_w + kx;
        const std::size_t col0 = ox0 * c.stride + kx - c.padding;
        const double* src_row = cols_m.data() + tap * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* out = dx + (n * c.in_channels + ic) * g.h * g.w;
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            double* dst = out + (oy * c.stride + ky - c.padding) * g.w + col0;
            const double* src = src_row + n * plane + oy * g.ow + ox0;
            for (std::size_t j = 0; j < ox1 - ox0; ++j) dst[j * c.stride] += src[j];
          }
        }
      }
    }
  }
}

void conv_forward(const Conv2D& c, const Tensor& x, Tensor& y) {
  const auto g = geometry(c, x, y.dim(2), y.dim(3));
  const std::size_t plane = g.oh * g.ow;
  const RowMatrix cols = im2col(c, g, x.data());
  ConstMapRow wm(c.weight.data(), static_cast<Eigen::Index>(c.out_channels), static_cast<Eigen::Index>(g.taps));
  const RowMatrix prod = wm * cols;  // [out_channels, n * plane]
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
      const double* src = prod.data() + oc * g.n * plane + n * plane;
      double* dst = y.data() + (n * c.out_channels + oc) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + c.bias[oc];
    }
  }
}

void conv_backward(const Conv2D& c, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor* dw, Tensor* db) {
  const auto g = geometry(c, x, dy.dim(2), dy.dim(3));
  const std::size_t plane = g.oh * g.ow;
  RowMatrix gm(static_cast<Eigen::Index>(c.out_channels), static_cast<Eigen::Index>(g.n * plane));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
      std::copy_n(dy.data() + (n * c.out_channels + oc) * plane, plane, gm.data() + oc * g.n * plane + n * plane);
    }
  }
  ConstMapRow wm(c.weight.data(), static_cast<Eigen::Index>(c.out_channels), static_cast<Eigen::Index>(g.taps));
  if (dw) {
    const RowMatrix cols = im2col(c, g, x.data());
    MapRow(dw->data(), static_cast<Eigen::Index>(c.out_channels), static_cast<Eigen::Index>(g.taps)).noalias() +=
        gm * cols.transpose();
  }
  if (db) {
    for (std::size_t oc = 0; oc < c.out_channels; ++oc) (*db)[oc] += gm.row(static_cast<Eigen::Index>(oc)).sum();
  }
  const RowMatrix dcols = wm.transpose() * gm;
  col2im_add(c, g, dcols, dx.data());
}

void dense_forward(const Dense& d, const Tensor& x, Tensor& y) {
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(d.in_features), out = static_cast<Eigen::Index>(d.out_features);
  ConstMapRow xm(x.data(), n, in);
  ConstMapRow wm(d.weight.data(), out, in);
  MapRow ym(y.data(), n, out);
  ym.noalias() = xm * wm.transpose();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index o = 0; o < out; ++o) ym(r, o) += d.bias[static_cast<std::size_t>(o)];
  }
}

void dense_backward(const Dense& d, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor* dw, Tensor* db) {
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(d.in_features), out = static_cast<Eigen::Index>(d.out_features);
  ConstMapRow xm(x.data(), n, in);
  ConstMapRow wm(d.weight.data(), out, in);
  ConstMapRow gm(dy.data(), n, out);
  MapRow(dx.data(), n, in).noalias() += gm * wm;
  if (dw) MapRow(dw->data(), out, in).noalias() += gm.transpose() * xm;
  if (db) {
    for (Eigen::Index o = 0; o < out; ++o) (*db)[static_cast<std::size_t>(o)] += gm.col(o).sum();
  }
}

void pool_forward(const MaxPool2D& p, const Tensor& x, Tensor& y, std::vector<std::uint32_t>& argmax) {
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = y.dim(2), ow = y.dim(3);
  argmax.resize(y.size());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* in = x.data() + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * p.stride) * w + ox * p.stride;
        for (std::size_t ky = 0; ky < p.window; ++ky) {
          for (std::size_t kx = 0; kx < p.window; ++kx) {
            std::size_t idx = (oy * p.stride + ky) * w + ox * p.stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        std::size_t o = pl * oh * ow + oy * ow + ox;
        y[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(pl * h * w + best);
      }
    }
  }
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2D& c) {
                          return "Conv2D(" + std::to_string(c.kernel_h) + "x" + std::to_string(c.kernel_w) +
                                 "," + std::to_string(c.in_channels) + "->" + std::to_string(c.out_channels) + ")";
                        },
                        [](const Dense& d) {
                          return "Dense(" + std::to_string(d.in_features) + "->" +
                                 std::to_string(d.out_features) + ")";
                        },
                        [](const ReLU&) { return std::string("ReLU"); },
                        [](const MaxPool2D& p) { return "MaxPool2D(" + std::to_string(p.window) + ")"; },
                        [](const Flatten&) { return std::string("Flatten"); },
                    },
                    layer);
}

ModelGraph::ModelGraph(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("model has no layers");
  if (input_shape_.empty() || element_count(input_shape_) == 0) throw ShapeError("empty model input shape");
  shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes_.push_back(output_shape_of(layers_[i], shapes_.back(), i));
  }
  if (shapes_.back().size() != 1) {
    throw ShapeError("model output must be a class vector, got " + shape_string(shapes_.back()));
  }
}

std::vector<Tensor*> ModelGraph::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    if (auto* c = std::get_if<Conv2D>(&layer)) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      out.push_back(&d->weight);
      out.push_back(&d->bias);
    }
  }
  return out;
}

std::vector<const Tensor*> ModelGraph::parameters() const {
  std::vector<const Tensor*> out;
  for (auto* p : const_cast<ModelGraph*>(this)->parameters()) out.push_back(p);
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

void initialize_parameters(ModelGraph& model, std::uint64_t seed) {
  Rng rng(seed);
  auto params = model.parameters();
  for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
    Tensor& weight = *params[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(weight.stride0()));
    for (auto& v : weight.values()) v = rng.uniform(-bound, bound);
    params[i + 1]->fill(0.0);
  }
}

namespace {
Conv2D conv(std::size_t in, std::size_t out) {
  Conv2D c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel_h = c.kernel_w = 3;
  c.stride = 1;
  c.padding = 1;
  c.weight = Tensor({out, in, 3, 3});
  c.bias = Tensor({out});
  return c;
}

Dense dense(std::size_t in, std::size_t out) {
  Dense d;
  d.in_features = in;
  d.out_features = out;
  d.weight = Tensor({out, in});
  d.bias = Tensor({out});
  return d;
}
}  // namespace

ModelGraph make_small_cnn(std::size_t rows, std::size_t cols, std::size_t classes, std::uint64_t seed) {
  if (rows % 4 != 0 || cols % 4 != 0 || rows == 0 || cols == 0) {
    throw ShapeError("SmallCNN needs image sides divisible by 4, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  if (classes < 2) throw ShapeError("classifier needs at least 2 classes");
  std::vector<Layer> layers{conv(1, 8),        ReLU{}, MaxPool2D{2, 2}, conv(8, 16), ReLU{},
                            MaxPool2D{2, 2}, Flatten{}, dense(16 * (rows / 4) * (cols / 4), classes)};
  ModelGraph model({1, rows, cols}, std::move(layers));
  initialize_parameters(model, seed);
  return model;
}

ModelGraph make_linear(Shape input_shape, std::size_t classes, std::uint64_t seed) {
  std::size_t features = element_count(input_shape);
  ModelGraph model(std::move(input_shape), {Flatten{}, dense(features, classes)});
  initialize_parameters(model, seed);
  return model;
}

Trace forward_trace(const ModelGraph& model, const Tensor& batch) {
  const Shape& in_shape = model.input_shape();
  if (batch.rank() != in_shape.size() + 1 || !std::equal(in_shape.begin(), in_shape.end(), batch.shape().begin() + 1)) {
    throw ShapeError("batch shape " + shape_string(batch.shape()) + " does not match model input [N, " +
                     shape_string(in_shape).substr(1));
  }
  const std::size_t n = batch.dim(0);
  Trace trace;
  trace.inputs.reserve(model.layers().size());
  trace.argmax.resize(model.layers().size());
  Tensor current = batch;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    Shape out_shape{n};
    const Shape& s = model.shape_before(i + 1);
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor next(out_shape);
    std::visit(Overloaded{
                   [&](const Conv2D& c) { conv_forward(c, current, next); },
                   [&](const Dense& d) { dense_forward(d, current, next); },
                   [&](const ReLU&) {
                     for (std::size_t j = 0; j < current.size(); ++j) next[j] = current[j] > 0.0 ? current[j] : 0.0;
                   },
                   [&](const MaxPool2D& p) { pool_forward(p, current, next, trace.argmax[i]); },
                   [&](const Flatten&) { next.storage() = current.storage(); },
               },
               model.layers()[i]);
    trace.inputs.push_back(std::move(current));
    current = std::move(next);
  }
  trace.logits = std::move(current);
  return trace;
}

Tensor forward(const ModelGraph& model, const Tensor& batch) { return forward_trace(model, batch).logits; }

Gradients backpropagate(const ModelGraph& model, const Trace& trace, const Tensor& logit_grad,
                        bool want_param_grads) {
  if (logit_grad.shape() != trace.logits.shape()) {
    throw ShapeError("logit gradient shape " + shape_string(logit_grad.shape()) + " != logits " +
                     shape_string(trace.logits.shape()));
  }
  Gradients grads;
  // Parameter gradients are stored in forward order; fill from the back.
  std::vector<Tensor> param_grads;
  if (want_param_grads) {
    for (const auto* p : model.parameters()) param_grads.emplace_back(p->shape());
  }
  std::size_t param_slot = param_grads.size();

  Tensor upstream = logit_grad;
  for (std::size_t li = model.layers().size(); li-- > 0;) {
    const Tensor& x = trace.inputs[li];
    Tensor dx(x.shape());
    std::visit(Overloaded{
                   [&](const Conv2D& c) {
                     Tensor* dw = nullptr;
                     Tensor* db = nullptr;
                     if (want_param_grads) {
                       param_slot -= 2;
                       dw = &param_grads[param_slot];
                       db = &param_grads[param_slot + 1];
                     }
                     conv_backward(c, x, upstream, dx, dw, db);
                   },
                   [&](const Dense& d) {
                     Tensor* dw = nullptr;
                     Tensor* db = nullptr;
                     if (want_param_grads) {
                       param_slot -= 2;
                       dw = &param_grads[param_slot];
                       db = &param_grads[param_slot + 1];
                     }
                     dense_backward(d, x, upstream, dx, dw, db);
                   },
                   [&](const ReLU&) {
                     for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > 0.0 ? upstream[j] : 0.0;
                   },
                   [&](const MaxPool2D&) {
                     const auto& winners = trace.argmax[li];
                     for (std::size_t j = 0; j < upstream.size(); ++j) dx[winners[j]] += upstream[j];
                   },
                   [&](const Flatten&) { dx.storage() = upstream.storage(); },
               },
               model.layers()[li]);
    upstream = std::move(dx);
  }
  for (double v : upstream.values()) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite input gradient");
  }
  grads.params = std::move(param_grads);
  grads.input = std::move(upstream);
  return grads;
}

Gradients backward(const ModelGraph& model, const Tensor& batch, std::span<const int> labels, bool want_param_grads) {
  Trace trace = forward_trace(model, batch);
  double loss = cross_entropy(trace.logits, labels);
  Gradients g = backpropagate(model, trace, cross_entropy_grad(trace.logits, labels), want_param_grads);
  g.loss = loss;
  return g;
}

}  // namespace fuit::nn
