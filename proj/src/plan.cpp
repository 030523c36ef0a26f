#include "fuit/plan.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fuit/format.hpp"

namespace fuit::harness {

namespace pt = boost::property_tree;

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string out = "invalid plan:";
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

class SectionReader {
 public:
  SectionReader(const pt::ptree& tree, std::string section, std::vector<std::string>& problems)
      : tree_(tree), section_(std::move(section)), problems_(problems) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!node) return;
    std::string raw = boost::trim_copy(node->data());
    if (auto v = parse<T>(raw)) {
      out = *v;
    } else {
      problems_.push_back(section_ + "." + key + ": cannot parse '" + raw + "'");
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    auto node = tree_.get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!node) return std::nullopt;
    return boost::trim_copy(node->data());
  }

  void reject_unknown() {
    for (const auto& [key, value] : tree_) {
      if (!seen_.count(key)) problems_.push_back(section_ + "." + key + ": unknown key");
    }
  }

  void fail(const std::string& key, const std::string& why) { problems_.push_back(section_ + "." + key + ": " + why); }

 private:
  template <typename T>
  static std::optional<T> parse(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      std::string l = boost::to_lower_copy(s);
      if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
      if (l == "false" || l == "no" || l == "off" || l == "0") return false;
      return std::nullopt;
    } else {
      std::istringstream in(s);
      T v{};
      in >> v;
      if (in.fail() || !in.eof()) return std::nullopt;
      return v;
    }
  }

  const pt::ptree& tree_;
  std::string section_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

void read_experiment(const pt::ptree& tree, const std::filesystem::path& base, ExperimentPlan& plan,
                     std::vector<std::string>& problems) {
  SectionReader r(tree, "experiment", problems);
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  if (auto v = r.raw("dataset")) {
    plan.dataset.path = resolve(*v);
  } else {
    r.fail("dataset", "missing");
  }
  if (auto v = r.raw("format")) {
    try {
      plan.dataset.format = parse_dataset_format(*v);
    } catch (const std::exception& e) {
      r.fail("format", e.what());
    }
  }
  if (auto v = r.raw("labels")) plan.dataset.labels_path = resolve(*v);
  if (plan.dataset.format == DatasetFormat::kIdx && plan.dataset.labels_path.empty()) {
    r.fail("labels", "required for the idx format");
  }
  r.read("k_folds", plan.k_folds);
  r.read("seed", plan.seed);
  r.read("jobs", plan.jobs);
  r.read("validation_fraction", plan.validation_fraction);
  r.read("single_fold", plan.single_fold);
  if (auto v = r.raw("output")) plan.output_dir = resolve(*v);
  if (auto v = r.raw("label_merge"); v && !v->empty()) {
    std::vector<std::string> pairs;
    boost::split(pairs, *v, boost::is_any_of(","));
    for (auto pair : pairs) {
      boost::trim(pair);
      std::vector<std::string> parts;
      boost::split(parts, pair, boost::is_any_of(":"));
      try {
        if (parts.size() != 2) throw std::invalid_argument("");
        plan.label_merge[std::stoi(parts[0])] = std::stoi(parts[1]);
      } catch (const std::exception&) {
        r.fail("label_merge", "expected 'from:to' pairs, got '" + pair + "'");
      }
    }
  }
  r.reject_unknown();
}

void read_transforms(const pt::ptree& tree, ExperimentPlan& plan, std::vector<std::string>& problems) {
  SectionReader r(tree, "transforms", problems);
  bool clean = false;
  r.read("clean", clean);
  if (clean) plan.regimes.push_back(Regime::clean());
  for (const std::string key : {"fuit", "discretize"}) {
    auto v = r.raw(key);
    if (!v) continue;
    std::string l = boost::to_lower_copy(*v);
    if (l == "off" || l == "false" || l == "no") continue;
    try {
      std::string spec = key;
      if (l != "on" && l != "true" && l != "yes") spec += ":" + *v;
      plan.regimes.push_back(parse_regime(spec));
    } catch (const std::exception& e) {
      r.fail(key, e.what());
    }
  }
  r.reject_unknown();
}

void read_train(const pt::ptree& tree, ExperimentPlan& plan, std::vector<std::string>& problems) {
  SectionReader r(tree, "train", problems);
  r.read("max_epochs", plan.train.max_epochs);
  r.read("learning_rate", plan.train.learning_rate);
  r.read("batch_size", plan.train.batch_size);
  r.read("early_stop_patience", plan.train.early_stop_patience);
  r.reject_unknown();
}

void read_attack(const std::string& section, const std::string& name, const pt::ptree& tree, ExperimentPlan& plan,
                 std::vector<std::string>& problems) {
  attacks::AttackKind kind;
  try {
    kind = attacks::parse_attack_kind(name);
  } catch (const std::exception& e) {
    problems.push_back(section + ": " + e.what());
    return;
  }
  auto spec = attacks::AttackSpec::defaults(kind);
  SectionReader r(tree, section, problems);
  switch (kind) {
    case attacks::AttackKind::kFgsm:
      r.read("epsilon", spec.epsilon);
      break;
    case attacks::AttackKind::kBim:
    case attacks::AttackKind::kPgd:
    case attacks::AttackKind::kPgdRandom:
      r.read("epsilon", spec.epsilon);
      r.read("alpha", spec.alpha);
      r.read("steps", spec.steps);
      break;
    case attacks::AttackKind::kCw:
      r.read("c", spec.c);
      r.read("kappa", spec.kappa);
      r.read("steps", spec.steps);
      r.read("learning_rate", spec.attack_lr);
      break;
    case attacks::AttackKind::kDeepFool:
      r.read("steps", spec.steps);
      r.read("overshoot", spec.overshoot);
      break;
  }
  r.reject_unknown();
  plan.attacks.push_back(spec);
}

}  // namespace

PlanError::PlanError(std::vector<std::string> problems) : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

ExperimentPlan parse_plan(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw PlanError({"line " + std::to_string(e.line()) + ": " + e.message()});
  }
  ExperimentPlan plan;
  std::vector<std::string> problems;
  // read_ini drops sections without keys, so take the headers from the text.
  std::vector<std::string> sections;
  {
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      boost::trim(line);
      if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
        auto name = boost::trim_copy(line.substr(1, line.size() - 2));
        if (std::find(sections.begin(), sections.end(), name) == sections.end()) sections.push_back(name);
      }
    }
  }
  const pt::ptree empty;
  bool has_experiment = false, has_transforms = false;
  for (const auto& section : sections) {
    auto it = tree.find(section);
    const pt::ptree& body = it == tree.not_found() ? empty : it->second;
    if (section == "experiment") {
      has_experiment = true;
      read_experiment(body, base_dir, plan, problems);
    } else if (section == "transforms") {
      has_transforms = true;
      read_transforms(body, plan, problems);
    } else if (section == "train") {
      read_train(body, plan, problems);
    } else if (boost::starts_with(section, "attack:")) {
      read_attack(section, section.substr(7), body, plan, problems);
    } else {
      problems.push_back(section + ": unknown section");
    }
  }
  if (!has_experiment) problems.push_back("experiment: missing section");
  if (!has_transforms) problems.push_back("transforms: missing section");
  for (auto& p : plan.problems()) {
    if (std::find(problems.begin(), problems.end(), p) == problems.end()) problems.push_back(p);
  }
  if (!problems.empty()) throw PlanError(std::move(problems));
  return plan;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read plan " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str(), path.parent_path());
}

std::string default_plan_text() {
  using attacks::AttackKind;
  using attacks::AttackSpec;
  nn::TrainConfig train;
  std::ostringstream out;
  out << "; Experiment plan. Attack distances are on the [0,1] input scale.\n"
      << "[experiment]\n"
      << "dataset = data/images.idx\n"
      << "format = idx\n"
      << "labels = data/labels.idx\n"
      << "k_folds = 5\n"
      << "seed = 1\n"
      << "jobs = 1\n"
      << "output = results\n"
      << "; label_merge = 2:1\n"
      << "validation_fraction = 0.1\n"
      << "single_fold = false\n\n"
      << "[transforms]\n"
      << "clean = true\n"
      << "fuit = " << kDefaultFuzzySets << "\n"
      << "discretize = " << kDefaultDiscretizeWidth << "\n\n"
      << "[train]\n"
      << "max_epochs = " << train.max_epochs << "\n"
      << "learning_rate = " << format_double(train.learning_rate) << "\n"
      << "batch_size = " << train.batch_size << "\n"
      << "early_stop_patience = " << train.early_stop_patience << "\n";
  for (auto kind : attacks::kAllAttacks) {
    auto s = AttackSpec::defaults(kind);
    out << "\n[attack:" << attacks::attack_name(kind) << "]\n";
    switch (kind) {
      case AttackKind::kFgsm:
        out << "epsilon = " << format_double(s.epsilon) << "\n";
        break;
      case AttackKind::kBim:
      case AttackKind::kPgd:
      case AttackKind::kPgdRandom:
        out << "epsilon = " << format_double(s.epsilon) << "\n"
            << "alpha = " << format_double(s.alpha) << "\n"
            << "steps = " << s.steps << "\n";
        break;
      case AttackKind::kCw:
        out << "c = " << format_double(s.c) << "\n"
            << "kappa = " << format_double(s.kappa) << "\n"
            << "steps = " << s.steps << "\n"
            << "learning_rate = " << format_double(s.attack_lr) << "\n";
        break;
      case AttackKind::kDeepFool:
        out << "steps = " << s.steps << "\n"
            << "overshoot = " << format_double(s.overshoot) << "\n";
        break;
    }
  }
  return out.str();
}

}  // namespace fuit::harness
