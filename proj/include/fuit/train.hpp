#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "fuit/model.hpp"

namespace fuit::nn {

/// Adam moments for every parameter tensor of a model (or any flat list of
/// parameter blocks).
struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_model(const ModelGraph& model);
  static AdamState for_sizes(std::span<const std::size_t> sizes);
};

/// One bias-corrected Adam update of each block in place.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr);
void adam_step(ModelGraph& model, const std::vector<Tensor>& grads, AdamState& state, double lr);

struct TrainConfig {
  int max_epochs = 150;
  double learning_rate = 0.001;
  int batch_size = 32;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inputs in [N, ...model input shape] layout with one label per row.
struct LabeledData {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  ModelGraph model;  // best-validation-loss checkpoint
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded mini-batch Adam training with early stopping on validation loss.
/// The returned model is the epoch with the lowest validation loss.
TrainResult train(ModelGraph model, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg);

std::vector<int> predict(const ModelGraph& model, const Tensor& batch);
double accuracy(const ModelGraph& model, const LabeledData& data);
double mean_loss(const ModelGraph& model, const LabeledData& data);

/// epoch,train_loss,val_loss,val_acc
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace fuit::nn
