#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fuit/experiment.hpp"

namespace fuit::harness {

/// Every problem in a plan file, reported together.
class PlanError : public std::runtime_error {
 public:
  explicit PlanError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses an INI plan:
///
///   [experiment]  dataset, format (idx|directory), labels, k_folds, seed,
///                 jobs, output, label_merge ("2:1, 3:1"),
///                 validation_fraction, single_fold
///   [transforms]  clean (true|false), fuit (R or off), discretize (L or off)
///   [train]       max_epochs, learning_rate, batch_size, early_stop_patience
///   [attack:NAME] one section per attack; keys override the defaults
///
/// Relative paths resolve against `base_dir`.
ExperimentPlan parse_plan(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

/// A complete plan listing every default, including the attack table.
std::string default_plan_text();

}  // namespace fuit::harness
