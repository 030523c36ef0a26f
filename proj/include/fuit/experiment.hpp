#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuit/attacks.hpp"
#include "fuit/dataset.hpp"
#include "fuit/regime.hpp"
#include "fuit/train.hpp"

namespace fuit::harness {

/// Declarative model x transform x attack grid.
struct ExperimentPlan {
  DatasetSource dataset;
  int k_folds = 5;
  std::vector<Regime> regimes;
  std::vector<attacks::AttackSpec> attacks;
  nn::TrainConfig train;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  std::map<int, int> label_merge;
  std::filesystem::path output_dir;  // empty: keep nothing on disk
  int jobs = 1;

  /// Debug mode: evaluate only the first fold (std is then 0).
  bool single_fold = false;

  /// Every problem found, one message per field; empty when valid.
  std::vector<std::string> problems() const;
};

/// One row of the accuracy matrix: a regime under clean test data or one attack.
struct ResultCell {
  std::string regime;
  std::string condition;                      // "clean" or an attack name
  std::vector<std::optional<double>> folds;   // nullopt: that fold's job failed
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::string> diagnostics;

  bool complete() const;
  /// Recomputes mean and sample standard deviation from the fold values.
  void aggregate();

  bool operator==(const ResultCell&) const = default;
};

struct ResultsTable {
  std::size_t fold_count = 0;
  std::vector<ResultCell> cells;
  nlohmann::json manifest = nlohmann::json::object();

  const ResultCell* find(const std::string& regime, const std::string& condition) const;
  bool complete() const;
  /// Tables compare equal on their cells; the manifest (runtimes) is ignored.
  bool operator==(const ResultsTable& other) const {
    return fold_count == other.fold_count && cells == other.cells;
  }
};

/// Seeds for one (fold, regime) job, derived from the master seed.
struct JobSeeds {
  std::uint64_t init;
  std::uint64_t train;
  std::uint64_t split;
  std::uint64_t attack(std::size_t attack_index) const;
};
JobSeeds job_seeds(std::uint64_t master, std::size_t fold, std::size_t regime_index);

using ProgressFn = std::function<void(const std::string&)>;

/// Cross-validated evaluation: per fold and regime, train on transformed
/// training images, score clean accuracy on transformed test images, then
/// attack the raw test images against that model and score the attacked
/// images after the same transform.
ResultsTable run_experiment(const ExperimentPlan& plan, const Dataset& data, const ProgressFn& progress = {});
ResultsTable run_experiment(const ExperimentPlan& plan, const ProgressFn& progress = {});

/// Label-merges and validates the plan's dataset (sides must be divisible by 4).
Dataset prepare_dataset(const ExperimentPlan& plan, const Dataset& data);

/// The plan's stratified folds of an already prepared dataset.
std::vector<Fold> plan_folds(const ExperimentPlan& plan, const Dataset& prepared);

struct FoldModel {
  nn::ModelGraph model;
  std::vector<nn::EpochRecord> history;
  int best_epoch = 0;
};

/// Trains one (fold, regime) model exactly as run_experiment does, and saves
/// it under <output_dir>/models when the plan has an output directory.
FoldModel train_fold(const ExperimentPlan& plan, const Dataset& prepared, const Fold& fold, std::size_t fold_index,
                     std::size_t regime_index);

/// <output_dir>/models/<regime>_fold<f>.ckpt
std::filesystem::path checkpoint_path(const std::filesystem::path& output_dir, const Regime& regime,
                                      std::size_t fold_index);

/// Lines describing every job the plan would run.
std::vector<std::string> describe_jobs(const ExperimentPlan& plan);

/// Softmax class probabilities of one image after the regime's transform.
std::vector<double> class_probability(const nn::ModelGraph& model, const ImageU8& image, const Regime& regime);

nlohmann::json plan_to_json(const ExperimentPlan& plan);

}  // namespace fuit::harness
