#include "fuit/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "fuit/format.hpp"

namespace fuit::harness {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::string results_csv(const ResultsTable& table) {
  std::string out = "regime,condition,mean,std";
  for (std::size_t f = 0; f < table.fold_count; ++f) out += ",fold_" + std::to_string(f);
  out += "\n";
  for (const auto& c : table.cells) {
    out += c.regime + "," + c.condition + "," + format_double(c.mean) + "," + format_double(c.stddev);
    for (std::size_t f = 0; f < table.fold_count; ++f) {
      out += ",";
      if (f < c.folds.size() && c.folds[f]) out += format_double(*c.folds[f]);
    }
    out += "\n";
  }
  return out;
}

nlohmann::json results_json(const ResultsTable& table) {
  nlohmann::json j;
  j["fold_count"] = table.fold_count;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : table.cells) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : c.folds) folds.push_back(f ? nlohmann::json(*f) : nlohmann::json(nullptr));
    j["cells"].push_back({{"regime", c.regime},
                          {"condition", c.condition},
                          {"mean", c.mean},
                          {"std", c.stddev},
                          {"folds", folds},
                          {"diagnostics", c.diagnostics}});
  }
  j["manifest"] = table.manifest;
  return j;
}

ResultsTable results_from_json(const nlohmann::json& j) {
  ResultsTable t;
  try {
    t.fold_count = j.at("fold_count").get<std::size_t>();
    for (const auto& cj : j.at("cells")) {
      ResultCell c;
      c.regime = cj.at("regime").get<std::string>();
      c.condition = cj.at("condition").get<std::string>();
      c.mean = cj.at("mean").get<double>();
      c.stddev = cj.at("std").get<double>();
      for (const auto& f : cj.at("folds")) {
        c.folds.push_back(f.is_null() ? std::nullopt : std::optional<double>(f.get<double>()));
      }
      c.diagnostics = cj.value("diagnostics", std::vector<std::string>{});
      t.cells.push_back(std::move(c));
    }
    t.manifest = j.value("manifest", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed results file: ") + e.what());
  }
  return t;
}

void write_results_csv(const std::filesystem::path& path, const ResultsTable& table) {
  write_text(path, results_csv(table));
}

void write_results_json(const std::filesystem::path& path, const ResultsTable& table) {
  write_text(path, results_json(table).dump(2) + "\n");
}

ResultsTable load_results_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return results_from_json(j);
}

std::string results_matrix(const ResultsTable& table) {
  std::vector<std::string> regimes, conditions;
  for (const auto& c : table.cells) {
    if (std::find(regimes.begin(), regimes.end(), c.regime) == regimes.end()) regimes.push_back(c.regime);
    if (std::find(conditions.begin(), conditions.end(), c.condition) == conditions.end()) {
      conditions.push_back(c.condition);
    }
  }
  std::ostringstream out;
  out << std::left << std::setw(16) << "accuracy %";
  for (const auto& c : conditions) out << std::setw(16) << c;
  out << "\n";
  for (const auto& r : regimes) {
    out << std::setw(16) << r;
    for (const auto& c : conditions) {
      const auto* cell = table.find(r, c);
      std::ostringstream v;
      if (!cell) {
        v << "-";
      } else {
        v << std::fixed << std::setprecision(2) << 100.0 * cell->mean << "+-" << 100.0 * cell->stddev;
        if (!cell->complete()) v << "*";
      }
      out << std::setw(16) << v.str();
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace fuit::harness
