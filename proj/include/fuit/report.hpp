#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "fuit/experiment.hpp"

namespace fuit::harness {

/// regime,condition,mean,std,fold_0,...; one row per cell, empty fields for
/// failed folds. Contains no timings, so identical runs give identical bytes.
std::string results_csv(const ResultsTable& table);

/// Cells plus the full manifest (plan, seeds, versions, runtimes).
nlohmann::json results_json(const ResultsTable& table);
ResultsTable results_from_json(const nlohmann::json& j);

void write_results_csv(const std::filesystem::path& path, const ResultsTable& table);
void write_results_json(const std::filesystem::path& path, const ResultsTable& table);
ResultsTable load_results_json(const std::filesystem::path& path);

/// Human-readable accuracy matrix: one row per regime, one column per condition.
std::string results_matrix(const ResultsTable& table);

}  // namespace fuit::harness
