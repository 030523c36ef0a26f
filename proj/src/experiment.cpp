#include "fuit/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "fuit/checkpoint.hpp"
#include "fuit/format.hpp"
#include "fuit/loss.hpp"
#include "fuit/rng.hpp"

namespace fuit::harness {

namespace {

struct JobResult {
  std::optional<double> clean;
  std::vector<std::optional<double>> attacked;
  std::vector<std::string> clean_diag;
  std::vector<std::string> attack_diag;
  nlohmann::json info = nlohmann::json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

nn::LabeledData labeled(const Regime& regime, const Dataset& data, const std::vector<std::size_t>& rows) {
  std::vector<ImageU8> imgs;
  nn::LabeledData out;
  imgs.reserve(rows.size());
  for (auto r : rows) {
    imgs.push_back(data.images[r]);
    out.labels.push_back(data.labels[r]);
  }
  out.inputs = encode_batch(regime, imgs);
  return out;
}

JobResult run_job(const ExperimentPlan& plan, const Dataset& data, const Fold& fold, std::size_t fold_index,
                  std::size_t regime_index) {
  const Regime& regime = plan.regimes[regime_index];
  const JobSeeds seeds = job_seeds(plan.seed, fold_index, regime_index);
  JobResult res;
  res.attacked.assign(plan.attacks.size(), std::nullopt);
  res.attack_diag.assign(plan.attacks.size(), "");
  const std::string where = regime.label() + " fold " + std::to_string(fold_index);
  auto t0 = std::chrono::steady_clock::now();

  nn::ModelGraph model;
  try {
    auto fm = train_fold(plan, data, fold, fold_index, regime_index);
    model = std::move(fm.model);
    res.info["best_epoch"] = fm.best_epoch;
    res.info["epochs_run"] = fm.history.size();
    res.info["train_seconds"] = seconds_since(t0);
  } catch (const std::exception& e) {
    std::string msg = where + ": training failed: " + e.what();
    res.clean_diag.push_back(msg);
    for (auto& d : res.attack_diag) d = msg;
    return res;
  }

  auto test_set = labeled(regime, data, fold.test);
  res.clean = nn::accuracy(model, test_set);

  std::vector<ImageU8> test_images;
  std::vector<int> test_labels;
  for (auto r : fold.test) {
    test_images.push_back(data.images[r]);
    test_labels.push_back(data.labels[r]);
  }
  const nn::Tensor raw = unit_batch(test_images);
  // Attacks see the bare network; the regime's transform is applied afterwards.
  const attacks::AttackTarget target(model);
  const attacks::AttackTarget judge(model, regime.attack_transform());

  res.info["attacks"] = nlohmann::json::object();
  for (std::size_t a = 0; a < plan.attacks.size(); ++a) {
    auto spec = plan.attacks[a];
    spec.seed = seeds.attack(a);
    const auto name = attacks::attack_name(spec.kind);
    auto ta = std::chrono::steady_clock::now();
    try {
      auto adv = attacks::run_attack(target, raw, test_labels, spec);
      attacks::rescore(adv, judge);
      res.attacked[a] = adv.adversarial_accuracy();
      double linf = 0.0, l2 = 0.0;
      std::size_t skipped = 0;
      for (std::size_t i = 0; i < adv.size(); ++i) {
        linf += adv.linf_norms[i];
        l2 += adv.l2_norms[i];
        skipped += adv.status[i] == attacks::ExampleStatus::kSkipped;
      }
      const double n = static_cast<double>(std::max<std::size_t>(adv.size(), 1));
      res.info["attacks"][name] = {{"seconds", seconds_since(ta)},
                                   {"mean_linf", linf / n},
                                   {"mean_l2", l2 / n},
                                   {"skipped", skipped}};
    } catch (const std::exception& e) {
      res.attack_diag[a] = where + ": " + name + " failed: " + e.what();
    }
  }
  res.info["seconds"] = seconds_since(t0);
  return res;
}

}  // namespace

std::filesystem::path checkpoint_path(const std::filesystem::path& output_dir, const Regime& regime,
                                      std::size_t fold_index) {
  return output_dir / "models" / (regime.label() + "_fold" + std::to_string(fold_index) + ".ckpt");
}

FoldModel train_fold(const ExperimentPlan& plan, const Dataset& data, const Fold& fold, std::size_t fold_index,
                     std::size_t regime_index) {
  const Regime& regime = plan.regimes.at(regime_index);
  const JobSeeds seeds = job_seeds(plan.seed, fold_index, regime_index);
  auto [fit_rows, val_rows] = stratified_holdout(fold.train, data.labels, plan.validation_fraction, seeds.split);
  auto train_set = labeled(regime, data, fit_rows);
  auto val_set = labeled(regime, data, val_rows);
  auto init = nn::make_small_cnn(data.rows(), data.cols(), data.num_classes(), seeds.init);
  nn::TrainConfig cfg = plan.train;
  cfg.seed = seeds.train;
  auto trained = nn::train(std::move(init), train_set, val_set, cfg);
  if (!plan.output_dir.empty()) {
    auto path = checkpoint_path(plan.output_dir, regime, fold_index);
    std::filesystem::create_directories(path.parent_path());
    nlohmann::json meta = {{"regime", regime.label()},
                           {"fold", fold_index},
                           {"master_seed", plan.seed},
                           {"tool_version", kToolVersion},
                           {"best_epoch", trained.best_epoch},
                           {"class_names", data.class_names}};
    nn::save_checkpoint(path, trained.model, meta);
    auto history = path;
    history.replace_extension();
    nn::write_history_csv(history.string() + "_history.csv", trained.history);
  }
  return {std::move(trained.model), std::move(trained.history), trained.best_epoch};
}

Dataset prepare_dataset(const ExperimentPlan& plan, const Dataset& input) {
  Dataset data = merge_labels(input, plan.label_merge);
  data.validate();
  if (data.rows() % 4 != 0 || data.cols() % 4 != 0) {
    throw DatasetError("image sides must be divisible by 4 for the SmallCNN, got " + std::to_string(data.rows()) +
                       "x" + std::to_string(data.cols()));
  }
  return data;
}

std::vector<Fold> plan_folds(const ExperimentPlan& plan, const Dataset& prepared) {
  auto folds = kfold_split(prepared.labels, plan.k_folds, derive_seed(plan.seed, {0xf01dULL}));
  if (plan.single_fold) folds.resize(1);
  return folds;
}

std::uint64_t JobSeeds::attack(std::size_t attack_index) const {
  return derive_seed(init, {0xa77acULL, attack_index});
}

JobSeeds job_seeds(std::uint64_t master, std::size_t fold, std::size_t regime_index) {
  return {derive_seed(master, {1, fold, regime_index}), derive_seed(master, {2, fold, regime_index}),
          derive_seed(master, {3, fold})};
}

bool ResultCell::complete() const {
  for (const auto& f : folds) {
    if (!f) return false;
  }
  return !folds.empty();
}

void ResultCell::aggregate() {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : folds) {
    if (f) {
      sum += *f;
      ++n;
    }
  }
  mean = n ? sum / static_cast<double>(n) : 0.0;
  double ss = 0.0;
  for (const auto& f : folds) {
    if (f) ss += (*f - mean) * (*f - mean);
  }
  stddev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
}

const ResultCell* ResultsTable::find(const std::string& regime, const std::string& condition) const {
  for (const auto& c : cells) {
    if (c.regime == regime && c.condition == condition) return &c;
  }
  return nullptr;
}

bool ResultsTable::complete() const {
  for (const auto& c : cells) {
    if (!c.complete()) return false;
  }
  return true;
}

std::vector<std::string> ExperimentPlan::problems() const {
  std::vector<std::string> out;
  if (k_folds < 2) out.push_back("experiment.k_folds: must be >= 2");
  if (regimes.empty()) out.push_back("transforms: at least one transform is required");
  for (const auto& a : attacks) {
    try {
      a.validate();
    } catch (const std::exception& e) {
      out.push_back(std::string("attack.") + e.what());
    }
  }
  try {
    train.validate();
  } catch (const std::exception& e) {
    out.push_back(e.what());
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    out.push_back("train.validation_fraction: must be in (0, 1)");
  }
  if (jobs < 1) out.push_back("experiment.jobs: must be >= 1");
  return out;
}

std::vector<std::string> describe_jobs(const ExperimentPlan& plan) {
  std::vector<std::string> lines;
  const int folds = plan.single_fold ? 1 : plan.k_folds;
  for (int f = 0; f < folds; ++f) {
    for (std::size_t r = 0; r < plan.regimes.size(); ++r) {
      std::string line = "fold " + std::to_string(f) + " | " + plan.regimes[r].label() + " | train, clean";
      for (const auto& a : plan.attacks) line += ", " + attacks::attack_name(a.kind);
      lines.push_back(line);
    }
  }
  return lines;
}

ResultsTable run_experiment(const ExperimentPlan& plan, const Dataset& input, const ProgressFn& progress) {
  auto problems = plan.problems();
  if (!problems.empty()) {
    std::string msg = "invalid plan:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::invalid_argument(msg);
  }
  const Dataset data = prepare_dataset(plan, input);
  const auto folds = plan_folds(plan, data);

  const std::size_t n_jobs = folds.size() * plan.regimes.size();
  std::vector<JobResult> results(n_jobs);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto t0 = std::chrono::steady_clock::now();

  auto worker = [&] {
    for (std::size_t j = next++; j < n_jobs; j = next++) {
      const std::size_t f = j / plan.regimes.size(), r = j % plan.regimes.size();
      results[j] = run_job(plan, data, folds[f], f, r);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        std::string msg = "fold " + std::to_string(f) + " " + plan.regimes[r].label() + ": clean=" +
                          (results[j].clean ? format_double(*results[j].clean) : std::string("failed"));
        for (std::size_t a = 0; a < plan.attacks.size(); ++a) {
          msg += " " + attacks::attack_name(plan.attacks[a].kind) + "=" +
                 (results[j].attacked[a] ? format_double(*results[j].attacked[a]) : std::string("failed"));
        }
        progress(msg);
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, plan.jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, n_jobs); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ResultsTable table;
  table.fold_count = folds.size();
  for (std::size_t r = 0; r < plan.regimes.size(); ++r) {
    auto make_cell = [&](const std::string& condition, auto value_of, auto diag_of) {
      ResultCell cell;
      cell.regime = plan.regimes[r].label();
      cell.condition = condition;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& jr = results[f * plan.regimes.size() + r];
        cell.folds.push_back(value_of(jr));
        for (const auto& d : diag_of(jr)) {
          if (!d.empty()) cell.diagnostics.push_back(d);
        }
      }
      cell.aggregate();
      table.cells.push_back(std::move(cell));
    };
    make_cell(
        "clean", [](const JobResult& jr) { return jr.clean; },
        [](const JobResult& jr) { return jr.clean_diag; });
    for (std::size_t a = 0; a < plan.attacks.size(); ++a) {
      make_cell(
          attacks::attack_name(plan.attacks[a].kind), [a](const JobResult& jr) { return jr.attacked[a]; },
          [a](const JobResult& jr) { return std::vector<std::string>{jr.attack_diag[a]}; });
    }
  }

  auto& m = table.manifest;
  m["tool_version"] = kToolVersion;
  m["master_seed"] = plan.seed;
  m["plan"] = plan_to_json(plan);
  m["dataset"] = {{"size", data.size()},
                  {"rows", data.rows()},
                  {"cols", data.cols()},
                  {"class_names", data.class_names},
                  {"sources", nlohmann::json::array()}};
  for (const auto& s : data.sources) m["dataset"]["sources"].push_back({{"path", s.path}, {"crc32", s.crc32}});
  m["jobs"] = nlohmann::json::array();
  for (std::size_t j = 0; j < n_jobs; ++j) {
    auto info = results[j].info;
    info["fold"] = j / plan.regimes.size();
    info["regime"] = plan.regimes[j % plan.regimes.size()].label();
    info["seeds"] = {{"init", job_seeds(plan.seed, j / plan.regimes.size(), j % plan.regimes.size()).init},
                     {"train", job_seeds(plan.seed, j / plan.regimes.size(), j % plan.regimes.size()).train}};
    m["jobs"].push_back(info);
  }
  m["runtime_seconds"] = seconds_since(t0);
  return table;
}

ResultsTable run_experiment(const ExperimentPlan& plan, const ProgressFn& progress) {
  return run_experiment(plan, load_dataset(plan.dataset), progress);
}

std::vector<double> class_probability(const nn::ModelGraph& model, const ImageU8& image, const Regime& regime) {
  auto enc = regime.encode(image);
  nn::Tensor batch({1, 1, image.rows, image.cols}, std::move(enc));
  auto p = nn::softmax(nn::forward(model, batch));
  return p.storage();
}

nlohmann::json plan_to_json(const ExperimentPlan& plan) {
  nlohmann::json j;
  j["dataset"] = {{"format", dataset_format_name(plan.dataset.format)},
                  {"path", plan.dataset.path.string()},
                  {"labels", plan.dataset.labels_path.string()}};
  j["k_folds"] = plan.k_folds;
  j["single_fold"] = plan.single_fold;
  j["seed"] = plan.seed;
  j["validation_fraction"] = plan.validation_fraction;
  j["transforms"] = nlohmann::json::array();
  for (const auto& r : plan.regimes) j["transforms"].push_back(r.label());
  j["train"] = {{"max_epochs", plan.train.max_epochs},
                {"learning_rate", plan.train.learning_rate},
                {"batch_size", plan.train.batch_size},
                {"early_stop_patience", plan.train.early_stop_patience}};
  j["attacks"] = nlohmann::json::array();
  for (const auto& a : plan.attacks) {
    nlohmann::json aj = {{"name", attacks::attack_name(a.kind)}};
    switch (a.kind) {
      case attacks::AttackKind::kFgsm:
        aj["epsilon"] = a.epsilon;
        break;
      case attacks::AttackKind::kBim:
      case attacks::AttackKind::kPgd:
      case attacks::AttackKind::kPgdRandom:
        aj["epsilon"] = a.epsilon;
        aj["alpha"] = a.alpha;
        aj["steps"] = a.steps;
        aj["random_start"] = a.random_start;
        break;
      case attacks::AttackKind::kCw:
        aj["c"] = a.c;
        aj["kappa"] = a.kappa;
        aj["steps"] = a.steps;
        aj["learning_rate"] = a.attack_lr;
        aj["variant"] = "L2, fixed c, no binary search";
        break;
      case attacks::AttackKind::kDeepFool:
        aj["steps"] = a.steps;
        aj["overshoot"] = a.overshoot;
        break;
    }
    j["attacks"].push_back(aj);
  }
  j["label_merge"] = nlohmann::json::object();
  for (const auto& [from, to] : plan.label_merge) j["label_merge"][std::to_string(from)] = to;
  j["jobs"] = plan.jobs;
  return j;
}

}  // namespace fuit::harness
