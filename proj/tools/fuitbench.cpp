// fuitbench: fuzzy-quantization defense benchmark.
//
//   fuitbench transform --input in.pgm --output out.pgm --method fuit --r 12
//   fuitbench testbed --output data
//   fuitbench plan > plan.ini
//   fuitbench evaluate --config plan.ini [--dry-run] [--jobs N]
//   fuitbench train --config plan.ini --fold 0
//   fuitbench attack --attack bim --checkpoint m.ckpt --dataset data/images.idx --labels data/labels.idx
//   fuitbench report --in results.json --format csv --out results.csv
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fuit/attacks.hpp"
#include "fuit/checkpoint.hpp"
#include "fuit/dataset.hpp"
#include "fuit/experiment.hpp"
#include "fuit/format.hpp"
#include "fuit/fuzzy.hpp"
#include "fuit/image_io.hpp"
#include "fuit/plan.hpp"
#include "fuit/regime.hpp"
#include "fuit/report.hpp"
#include "fuit/testbed.hpp"

namespace fs = std::filesystem;
using namespace fuit;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Configuration problems detected after argument parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int g_verbosity = 1;

void log(int level, const std::string& msg) {
  if (level <= g_verbosity) std::cerr << "fuitbench: " << msg << "\n";
}

std::string attack_table() {
  std::ostringstream out;
  out << "Attack defaults (distances on the [0,1] input scale):\n"
      << "  pgd       epsilon=0.3 alpha=4/255 steps=40\n"
      << "  pgd-r     epsilon=0.3 alpha=4/255 steps=40 random start\n"
      << "  fgsm      epsilon=0.008\n"
      << "  cw        c=2 kappa=2 steps=500 learning_rate=0.01 (L2, fixed c)\n"
      << "  deepfool  steps=20 overshoot=0.02\n"
      << "  bim       epsilon=8/255 alpha=1/255 steps=10\n";
  return out.str();
}

fs::path default_output(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FUIT_OUTPUT_DIR"); env && *env) return env;
  return {};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json base_manifest(const std::string& command, std::uint64_t seed) {
  return {{"tool", "fuitbench"}, {"tool_version", kToolVersion}, {"command", command}, {"master_seed", seed}};
}

// ---- transform ------------------------------------------------------------

struct TransformOptions {
  std::string input, output, method = "fuit";
  int r = kDefaultFuzzySets;
  int l = kDefaultDiscretizeWidth;
};

IndexImage apply_method(const TransformOptions& o, const FuzzyPartition* partition, const ImageU8& img) {
  if (o.method == "fuit") return fuit_image(*partition, img);
  return hard_discretize(img, o.l);
}

void write_index_image(const fs::path& path, const IndexImage& img) {
  if (path.extension() == ".csv") {
    io::write_csv(path, img);
  } else {
    io::write_pgm(path, img);
  }
}

int run_transform(const TransformOptions& o) {
  std::optional<FuzzyPartition> partition;
  try {
    if (o.method == "fuit") {
      partition = build_uniform_partition(o.r);
    } else {
      discretize_levels(o.l);
    }
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const fs::path in(o.input), out(o.output);
  if (!fs::exists(in)) throw std::runtime_error("input " + in.string() + " does not exist");

  json manifest = base_manifest("transform", 0);
  manifest["method"] = o.method;
  if (o.method == "fuit") {
    manifest["fuzzy_sets"] = o.r;
    manifest["peaks"] = json::array();
    for (const auto& s : partition->sets()) manifest["peaks"].push_back(s.q());
  } else {
    manifest["width"] = o.l;
    manifest["levels"] = discretize_levels(o.l);
  }
  manifest["files"] = json::array();

  auto one = [&](const fs::path& src, const fs::path& dst) {
    const auto img = io::read_image(src);
    const auto result = apply_method(o, partition ? &*partition : nullptr, img);
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    write_index_image(dst, result);
    manifest["files"].push_back({{"input", src.string()},
                                 {"input_crc32", io::file_checksum(src)},
                                 {"output", dst.string()},
                                 {"unique_values_before", unique_value_count(img).count},
                                 {"unique_values_after", unique_value_count(result).count}});
    log(2, src.string() + " -> " + dst.string());
  };

  fs::path manifest_path;
  if (fs::is_directory(in)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(in)) {
      auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto rel = fs::relative(f, in);
      rel.replace_extension(".pgm");
      one(f, out / rel);
    }
    manifest_path = out / "manifest.json";
    log(1, "transformed " + std::to_string(files.size()) + " images into " + out.string());
  } else {
    one(in, out);
    manifest_path = out.string() + ".manifest.json";
  }
  write_json(manifest_path, manifest);
  return 0;
}

// ---- testbed --------------------------------------------------------------

int run_testbed(const harness::TestbedConfig& cfg, const std::string& output) {
  const fs::path out = default_output(output);
  if (out.empty()) throw UsageError("--output is required (or set FUIT_OUTPUT_DIR)");
  auto data = harness::make_testbed(cfg);
  harness::save_idx_dataset(data, out / "images.idx", out / "labels.idx");
  json manifest = base_manifest("testbed", cfg.seed);
  manifest["size"] = cfg.size;
  manifest["rows"] = cfg.rows;
  manifest["cols"] = cfg.cols;
  manifest["class_names"] = data.class_names;
  manifest["images_crc32"] = io::file_checksum(out / "images.idx");
  manifest["labels_crc32"] = io::file_checksum(out / "labels.idx");
  write_json(out / "manifest.json", manifest);
  log(1, "wrote " + std::to_string(cfg.size) + " images to " + out.string());
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateOptions {
  std::string config, output;
  bool dry_run = false;
  bool single_fold = false;
  bool no_runtimes = false;
  int jobs = 0;
  std::optional<std::uint64_t> seed;
};

harness::ExperimentPlan load_plan_or_usage(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("plan " + path + " does not exist");
  try {
    return harness::load_plan(path);
  } catch (const harness::PlanError& e) {
    throw UsageError(e.what());
  }
}

void apply_overrides(harness::ExperimentPlan& plan, const std::string& output, int jobs,
                     std::optional<std::uint64_t> seed, bool single_fold) {
  if (!output.empty()) {
    plan.output_dir = output;
  } else if (plan.output_dir.empty()) {
    plan.output_dir = default_output("");
  }
  if (jobs > 0) plan.jobs = jobs;
  if (seed) plan.seed = *seed;
  if (single_fold) plan.single_fold = true;
  if (auto problems = plan.problems(); !problems.empty()) throw UsageError(harness::PlanError(problems).what());
}

void strip_runtimes(json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      const auto& key = it.key();
      if (key == "seconds" || key == "train_seconds" || key == "runtime_seconds") {
        it = j.erase(it);
      } else {
        strip_runtimes(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& v : j) strip_runtimes(v);
  }
}

int run_evaluate(const EvaluateOptions& o) {
  auto plan = load_plan_or_usage(o.config);
  apply_overrides(plan, o.output, o.jobs, o.seed, o.single_fold);
  if (o.dry_run) {
    for (const auto& line : harness::describe_jobs(plan)) std::cout << line << "\n";
    return 0;
  }
  if (plan.output_dir.empty()) throw UsageError("no output directory: set experiment.output, --output or FUIT_OUTPUT_DIR");

  log(1, "loading " + plan.dataset.path.string());
  auto data = harness::load_dataset(plan.dataset);
  log(1, std::to_string(data.size()) + " images, " + std::to_string(data.num_classes()) + " classes; " +
             std::to_string(harness::describe_jobs(plan).size()) + " jobs");
  auto table = harness::run_experiment(plan, data, [](const std::string& m) { log(1, m); });
  if (o.no_runtimes) strip_runtimes(table.manifest);

  harness::write_results_csv(plan.output_dir / "results.csv", table);
  harness::write_results_json(plan.output_dir / "results.json", table);
  std::cerr << harness::results_matrix(table);
  for (const auto& c : table.cells) {
    for (const auto& d : c.diagnostics) log(0, "cell " + c.regime + "/" + c.condition + ": " + d);
  }
  log(1, "wrote " + (plan.output_dir / "results.csv").string());
  return table.complete() ? 0 : kExitRuntime;
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  std::string config, output, regime;
  int fold = 0;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainOptions& o) {
  auto plan = load_plan_or_usage(o.config);
  apply_overrides(plan, o.output, 0, o.seed, false);
  if (plan.output_dir.empty()) throw UsageError("no output directory: set experiment.output, --output or FUIT_OUTPUT_DIR");
  if (o.fold < 0 || o.fold >= plan.k_folds) {
    throw UsageError("--fold must be in 0.." + std::to_string(plan.k_folds - 1));
  }
  std::size_t regime_index = 0;
  if (!o.regime.empty()) {
    harness::Regime wanted = [&] {
      try {
        return harness::parse_regime(o.regime);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }();
    auto it = std::find_if(plan.regimes.begin(), plan.regimes.end(),
                           [&](const harness::Regime& r) { return r.label() == wanted.label(); });
    if (it == plan.regimes.end()) throw UsageError("--regime " + o.regime + " is not in the plan's transforms");
    regime_index = static_cast<std::size_t>(it - plan.regimes.begin());
  }
  plan.single_fold = false;
  auto data = harness::prepare_dataset(plan, harness::load_dataset(plan.dataset));
  auto folds = harness::plan_folds(plan, data);
  const auto f = static_cast<std::size_t>(o.fold);
  const auto& regime = plan.regimes[regime_index];
  log(1, "training " + regime.label() + " fold " + std::to_string(f) + " on " +
             std::to_string(folds[f].train.size()) + " images");
  auto fm = harness::train_fold(plan, data, folds[f], f, regime_index);
  const auto path = harness::checkpoint_path(plan.output_dir, regime, f);
  log(1, "best epoch " + std::to_string(fm.best_epoch) + " of " + std::to_string(fm.history.size()) + "; wrote " +
             path.string());
  return 0;
}

// ---- attack ---------------------------------------------------------------

struct AttackOptions {
  std::string attack, checkpoint, dataset, format = "idx", labels, output, regime;
  std::optional<double> epsilon, alpha, c, kappa, learning_rate, overshoot;
  std::optional<int> steps;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
};

int run_attack(const AttackOptions& o) {
  attacks::AttackSpec spec;
  try {
    spec = attacks::AttackSpec::defaults(attacks::parse_attack_kind(o.attack));
  } catch (const std::exception& e) {
    throw UsageError(std::string("--attack: ") + e.what());
  }
  if (o.epsilon) spec.epsilon = *o.epsilon;
  if (o.alpha) spec.alpha = *o.alpha;
  if (o.steps) spec.steps = *o.steps;
  if (o.c) spec.c = *o.c;
  if (o.kappa) spec.kappa = *o.kappa;
  if (o.learning_rate) spec.attack_lr = *o.learning_rate;
  if (o.overshoot) spec.overshoot = *o.overshoot;
  spec.seed = o.seed;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw UsageError(std::string("attack.") + e.what());
  }
  const fs::path out = default_output(o.output);
  if (out.empty()) throw UsageError("--output is required (or set FUIT_OUTPUT_DIR)");

  harness::DatasetSource source;
  try {
    source.format = harness::parse_dataset_format(o.format);
  } catch (const std::exception& e) {
    throw UsageError(std::string("--format: ") + e.what());
  }
  source.path = o.dataset;
  source.labels_path = o.labels;
  if (source.format == harness::DatasetFormat::kIdx && o.labels.empty()) throw UsageError("--labels is required for idx");

  auto ckpt = nn::load_checkpoint(o.checkpoint);
  std::string regime_text = o.regime;
  if (regime_text.empty()) {
    // Checkpoint labels look like "fuit-r12"; map back to the parser's spelling.
    std::string label = ckpt.metadata.value("regime", std::string("clean"));
    auto dash = label.find('-');
    regime_text = dash == std::string::npos ? label : label.substr(0, dash) + ":" + label.substr(dash + 2);
  }
  harness::Regime regime = [&] {
    try {
      return harness::parse_regime(regime_text);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--regime: ") + e.what());
    }
  }();

  auto data = harness::load_dataset(source);
  std::vector<ImageU8> images = data.images;
  std::vector<int> labels = data.labels;
  if (o.limit > 0 && o.limit < images.size()) {
    images.resize(o.limit);
    labels.resize(o.limit);
  }
  const auto x = harness::unit_batch(images);
  const attacks::AttackTarget target(ckpt.model);
  const attacks::AttackTarget judge(ckpt.model, regime.attack_transform());
  log(1, "running " + o.attack + " on " + std::to_string(images.size()) + " images against " + o.checkpoint);
  auto adv = attacks::run_attack(target, x, labels, spec);
  attacks::rescore(adv, judge);

  std::vector<ImageU8> perturbed;
  const std::size_t d = x.stride0();
  for (std::size_t i = 0; i < images.size(); ++i) {
    ImageU8 img(images[i].rows, images[i].cols);
    for (std::size_t j = 0; j < d; ++j) {
      img.pixels[j] = static_cast<std::uint8_t>(std::lround(unit_to_pixel(adv.perturbed[i * d + j])));
    }
    perturbed.push_back(std::move(img));
  }
  if (source.format == harness::DatasetFormat::kIdx) {
    io::write_idx_images(out / "images.idx", perturbed);
    std::vector<std::uint8_t> raw(labels.begin(), labels.end());
    io::write_idx_labels(out / "labels.idx", raw);
  } else {
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      fs::path src = data.sources[i].path;
      fs::path dst = out / data.class_names[static_cast<std::size_t>(labels[i])] / src.filename();
      fs::create_directories(dst.parent_path());
      io::write_image(dst, perturbed[i], io::format_for(src));
    }
  }

  json manifest = base_manifest("attack", o.seed);
  manifest["attack"] = {{"name", o.attack},       {"epsilon", spec.epsilon}, {"alpha", spec.alpha},
                        {"steps", spec.steps},    {"c", spec.c},             {"kappa", spec.kappa},
                        {"learning_rate", spec.attack_lr}, {"overshoot", spec.overshoot}, {"seed", spec.seed}};
  manifest["threat_model"] = "gradients of the bare network; predictions through the regime transform";
  manifest["checkpoint"] = {{"path", o.checkpoint}, {"crc32", io::file_checksum(o.checkpoint)}};
  manifest["regime"] = regime.label();
  manifest["adversarial_accuracy"] = adv.adversarial_accuracy();
  manifest["examples"] = json::array();
  for (std::size_t i = 0; i < adv.size(); ++i) {
    manifest["examples"].push_back({{"label", adv.true_labels[i]},
                                    {"predicted_before", adv.predicted_before[i]},
                                    {"predicted_after", adv.predicted_after[i]},
                                    {"fooled", adv.fooled(i)},
                                    {"status", attacks::status_name(adv.status[i])},
                                    {"iterations", adv.iterations[i]},
                                    {"linf", adv.linf_norms[i]},
                                    {"l2", adv.l2_norms[i]},
                                    {"diagnostic", adv.diagnostics[i]}});
  }
  write_json(out / "manifest.json", manifest);
  log(1, "adversarial accuracy " + format_double(adv.adversarial_accuracy()) + "; wrote " + out.string());
  return 0;
}

// ---- report ---------------------------------------------------------------

int run_report(const std::string& in, const std::string& format, const std::string& out_path) {
  auto table = harness::load_results_json(in);
  std::string text;
  if (format == "csv") {
    text = harness::results_csv(table);
  } else if (format == "json") {
    text = harness::results_json(table).dump(2) + "\n";
  } else {
    text = harness::results_matrix(table);
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
    std::ofstream out(out_path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + out_path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fuzzy quantization defense benchmark"};
  app.footer(attack_table());
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "More log output (repeatable)");
  app.add_flag("-q,--quiet", quiet, "Only errors");

  TransformOptions topt;
  auto* transform = app.add_subcommand("transform", "Quantize images with FUIT or hard discretization");
  transform->add_option("-i,--input", topt.input, "Image file (.pgm/.png) or directory")->required();
  transform->add_option("-o,--output", topt.output, "Output file (.pgm or .csv) or directory")->required();
  transform->add_option("-m,--method", topt.method, "fuit or discretize")
      ->check(CLI::IsMember({"fuit", "discretize"}))
      ->capture_default_str();
  transform->add_option("--r", topt.r, "Number of fuzzy sets")->capture_default_str();
  transform->add_option("--l", topt.l, "Discretization bin width")->capture_default_str();

  harness::TestbedConfig tcfg;
  std::string testbed_out;
  auto* testbed = app.add_subcommand("testbed", "Write the synthetic two-class radiograph corpus as IDX");
  testbed->add_option("-o,--output", testbed_out, "Output directory");
  testbed->add_option("--size", tcfg.size, "Number of images")->capture_default_str();
  testbed->add_option("--rows", tcfg.rows, "Image rows")->capture_default_str();
  testbed->add_option("--cols", tcfg.cols, "Image columns")->capture_default_str();
  testbed->add_option("--seed", tcfg.seed, "Generator seed")->capture_default_str();

  auto* plan_cmd = app.add_subcommand("plan", "Print a plan file with every default");
  plan_cmd->footer(attack_table());

  EvaluateOptions eopt;
  std::uint64_t eval_seed = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validated accuracy matrix for a plan");
  evaluate->footer(attack_table());
  evaluate->add_option("-c,--config", eopt.config, "Plan file")->required();
  evaluate->add_option("-o,--output", eopt.output, "Output directory (overrides the plan)");
  evaluate->add_option("-j,--jobs", eopt.jobs, "Worker threads (overrides the plan)")->check(CLI::PositiveNumber);
  auto* eval_seed_opt = evaluate->add_option("--seed", eval_seed, "Master seed (overrides the plan)");
  evaluate->add_flag("--dry-run", eopt.dry_run, "Print the job grid and exit");
  evaluate->add_flag("--single-fold", eopt.single_fold, "Run only the first fold");
  evaluate->add_flag("--no-runtimes", eopt.no_runtimes, "Omit timings from results.json");

  TrainOptions tropt;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Train one fold's model and write its checkpoint");
  train->add_option("-c,--config", tropt.config, "Plan file")->required();
  train->add_option("-f,--fold", tropt.fold, "Fold index")->capture_default_str();
  train->add_option("-r,--regime", tropt.regime, "Transform (default: the plan's first)");
  train->add_option("-o,--output", tropt.output, "Output directory (overrides the plan)");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Master seed (overrides the plan)");

  AttackOptions aopt;
  auto* attack = app.add_subcommand("attack", "Generate adversarial images against a checkpoint");
  attack->footer(attack_table());
  attack->add_option("-a,--attack", aopt.attack, "fgsm, bim, pgd, pgd-r, cw or deepfool")->required();
  attack->add_option("-k,--checkpoint", aopt.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  attack->add_option("-d,--dataset", aopt.dataset, "IDX image file or class directory root")->required();
  attack->add_option("--format", aopt.format, "idx or directory")->capture_default_str();
  attack->add_option("--labels", aopt.labels, "IDX label file");
  attack->add_option("-o,--output", aopt.output, "Output directory");
  attack->add_option("-r,--regime", aopt.regime, "Transform used to judge predictions (default: from checkpoint)");
  attack->add_option("--epsilon", aopt.epsilon, "L-inf budget");
  attack->add_option("--alpha", aopt.alpha, "Step size");
  attack->add_option("--steps", aopt.steps, "Iterations");
  attack->add_option("--c", aopt.c, "CW trade-off constant");
  attack->add_option("--kappa", aopt.kappa, "CW confidence margin");
  attack->add_option("--learning-rate", aopt.learning_rate, "CW Adam learning rate");
  attack->add_option("--overshoot", aopt.overshoot, "DeepFool overshoot");
  attack->add_option("--seed", aopt.seed, "Random-start seed")->capture_default_str();
  attack->add_option("--limit", aopt.limit, "Attack only the first N images");

  std::string report_in, report_format = "csv", report_out;
  auto* report = app.add_subcommand("report", "Convert a results.json");
  report->add_option("-i,--in", report_in, "results.json")->required()->check(CLI::ExistingFile);
  report->add_option("-f,--format", report_format, "csv, json or matrix")
      ->check(CLI::IsMember({"csv", "json", "matrix"}))
      ->capture_default_str();
  report->add_option("-o,--out", report_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  g_verbosity = quiet ? 0 : 1 + verbose;

  try {
    if (*transform) return run_transform(topt);
    if (*testbed) return run_testbed(tcfg, testbed_out);
    if (*plan_cmd) {
      std::cout << harness::default_plan_text();
      return 0;
    }
    if (*evaluate) {
      if (*eval_seed_opt) eopt.seed = eval_seed;
      return run_evaluate(eopt);
    }
    if (*train) {
      if (*train_seed_opt) tropt.seed = train_seed;
      return run_train(tropt);
    }
    if (*attack) return run_attack(aopt);
    if (*report) return run_report(report_in, report_format, report_out);
  } catch (const UsageError& e) {
    log(0, std::string("error: ") + e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(0, std::string("error: ") + e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
