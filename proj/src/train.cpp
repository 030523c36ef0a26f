#include "fuit/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fuit/format.hpp"
#include "fuit/loss.hpp"
#include "fuit/rng.hpp"

namespace fuit::nn {

namespace {
constexpr std::size_t kEvalChunk = 256;
}

AdamState AdamState::for_model(const ModelGraph& model) {
  std::vector<std::size_t> sizes;
  for (const auto* p : model.parameters()) sizes.push_back(p->size());
  return for_sizes(sizes);
}

AdamState AdamState::for_sizes(std::span<const std::size_t> sizes) {
  AdamState s;
  for (auto n : sizes) {
    s.first_moment.emplace_back(n, 0.0);
    s.second_moment.emplace_back(n, 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam: parameter, gradient and moment block counts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    if (p.size() != g.size() || p.size() != m.size()) throw ShapeError("adam: block size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(ModelGraph& model, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  std::vector<std::span<double>> p;
  std::vector<std::span<const double>> g;
  for (auto* t : model.parameters()) p.push_back(t->values());
  for (const auto& t : grads) g.push_back(t.values());
  adam_step(p, g, state, lr);
}

void TrainConfig::validate() const {
  if (max_epochs <= 0 || batch_size <= 0 || early_stop_patience <= 0) {
    throw std::invalid_argument("train config: max_epochs, batch_size and patience must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train config: learning rate must be finite and non-negative");
  }
}

std::vector<int> predict(const ModelGraph& model, const Tensor& batch) {
  std::vector<int> out;
  out.reserve(batch.dim(0));
  for (std::size_t begin = 0; begin < batch.dim(0); begin += kEvalChunk) {
    std::size_t end = std::min(batch.dim(0), begin + kEvalChunk);
    auto part = argmax_rows(forward(model, batch.slice(begin, end)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double accuracy(const ModelGraph& model, const LabeledData& data) {
  if (data.size() == 0) return 0.0;
  auto pred = predict(model, data.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double mean_loss(const ModelGraph& model, const LabeledData& data) {
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    std::size_t end = std::min(data.size(), begin + kEvalChunk);
    std::span<const int> labels(data.labels.data() + begin, end - begin);
    total += cross_entropy(forward(model, data.inputs.slice(begin, end)), labels) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(ModelGraph model, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw TrainingError("training set is empty");
  if (val_set.size() == 0) throw TrainingError("validation set is empty");
  const auto k = static_cast<int>(model.num_classes());
  for (const auto* set : {&train_set, &val_set}) {
    for (int y : set->labels) {
      if (y < 0 || y >= k) throw TrainingError("label " + std::to_string(y) + " outside model's " +
                                               std::to_string(k) + " classes");
    }
  }

  Rng rng(cfg.seed);
  AdamState adam = AdamState::for_model(model);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.model = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Tensor batch = train_set.inputs.gather(rows);
      std::vector<int> labels;
      labels.reserve(rows.size());
      for (auto r : rows) labels.push_back(train_set.labels[r]);

      Gradients g;
      try {
        g = backward(model, batch, labels);
      } catch (const NonFiniteError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(begin) + ": " + e.what());
      }
      if (!std::isfinite(g.loss)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": loss is " +
                            format_double(g.loss));
      }
      loss_sum += g.loss * static_cast<double>(rows.size());
      adam_step(model, g.params, adam, cfg.learning_rate);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    try {
      rec.val_loss = mean_loss(model, val_set);
    } catch (const NonFiniteError& e) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    rec.val_accuracy = accuracy(model, val_set);
    result.history.push_back(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.val_accuracy) << '\n';
  }
}

}  // namespace fuit::nn
