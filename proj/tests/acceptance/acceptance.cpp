// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance           every criterion (the cross-validated run takes ~15 min)
//   acceptance --quick   skips the cross-validated run (criteria 6 and 7)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "../support/gradcheck.hpp"
#include "fuit/attacks.hpp"
#include "fuit/experiment.hpp"
#include "fuit/format.hpp"
#include "fuit/fuzzy.hpp"
#include "fuit/loss.hpp"
#include "fuit/model.hpp"
#include "fuit/plan.hpp"
#include "fuit/report.hpp"
#include "fuit/rng.hpp"
#include "fuit/testbed.hpp"
#include "fuit/train.hpp"

using namespace fuit;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void verdict(const std::string& id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

void worked_example() {
  const ImageU8 clean(3, 3, {78, 61, 120, 236, 222, 40, 10, 11, 15});
  const ImageU8 adversarial(3, 3, {81, 63, 123, 241, 222, 40, 17, 15, 17});
  const std::vector<int> expected{4, 3, 6, 12, 11, 2, 1, 1, 1};

  const auto t0 = Clock::now();
  const auto partition = build_uniform_partition(12);
  const auto a = fuit_image(partition, clean);
  const auto b = fuit_image(partition, adversarial);
  const double elapsed = seconds_since(t0);

  const auto va = unique_value_count(a), vb = unique_value_count(b);
  const std::vector<int> values{1, 2, 3, 4, 6, 11, 12};
  const bool pass = a.indices == expected && b.indices == expected && va.count == 7 && vb.count == 7 &&
                    va.values == values && vb.values == values && elapsed < 1e-3;
  verdict("1", pass,
          "clean and adversarial 3x3 -> [4,3,6,12,11,2,1,1,1], ||V|| = " + std::to_string(va.count) + "/" +
              std::to_string(vb.count) + ", " + fmt(elapsed * 1e6) + " us");
}

// ---- 2 ----------------------------------------------------------------------

// Independent piecewise form of the triangular membership.
double piecewise(double x, double p, double q, double r) {
  if (x <= q && p == q) return 1.0;
  if (x >= q && q == r) return 1.0;
  if (x <= p || x >= r) return 0.0;
  if (x == q) return 1.0;
  if (x < q) return (x - p) / (q - p);
  return (r - x) / (r - q);
}

void membership_algebra() {
  Rng rng(2024);
  double worst = 0.0;
  bool exact = true;
  for (int i = 0; i < 10000; ++i) {
    double p = rng.uniform(0.0, 200.0);
    double q = p + rng.uniform(0.5, 60.0);
    double r = q + rng.uniform(0.5, 60.0);
    const auto shape = rng.below(10);
    if (shape == 0) p = q;  // left shoulder
    if (shape == 1) r = q;  // right shoulder
    const FuzzySet set(p, q, r);
    const double x = rng.uniform(p - 20.0, r + 20.0);
    worst = std::max(worst, std::abs(set.membership(x) - piecewise(x, p, q, r)));

    exact &= set.membership(q) == 1.0;
    if (p < q) exact &= set.membership(p) == 0.0 && set.membership(p - rng.uniform(0.0, 50.0)) == 0.0;
    if (q < r) exact &= set.membership(r) == 0.0 && set.membership(r + rng.uniform(0.0, 50.0)) == 0.0;
  }
  verdict("2", worst <= 1e-12 && exact,
          "10000 random (x, set) pairs, max |diff| = " + fmt(worst) + ", peak/feet exact: " + (exact ? "yes" : "no"));
}

// ---- 3 ----------------------------------------------------------------------

int argmax_oracle(int r, int x) {
  const double w = 255.0 / r;
  int best = 1;
  double best_mu = -1.0;
  for (int k = 1; k <= r; ++k) {
    const double q = (k - 0.5) * w;
    double mu;
    if (k == 1 && x <= q) {
      mu = 1.0;
    } else if (k == r && x >= q) {
      mu = 1.0;
    } else {
      mu = std::max(0.0, 1.0 - std::abs(x - q) / w);
    }
    if (mu > best_mu) {
      best_mu = mu;
      best = k;
    }
  }
  return best;
}

int nearest_peak(int r, int x) {
  const double w = 255.0 / r;
  int best = 1;
  for (int k = 2; k <= r; ++k) {
    if (std::abs(x - (k - 0.5) * w) < std::abs(x - (best - 0.5) * w)) best = k;
  }
  return best;
}

void quantizer_oracle() {
  std::vector<int> got(63 * 256);
  const auto t0 = Clock::now();
  for (int r = 2; r <= 64; ++r) {
    const auto part = build_uniform_partition(r);
    for (int x = 0; x < 256; ++x) got[static_cast<std::size_t>((r - 2) * 256 + x)] = fuit_pixel(part, x).index;
  }
  const double elapsed = seconds_since(t0);
  std::size_t mismatches = 0;
  for (int r = 2; r <= 64; ++r) {
    for (int x = 0; x < 256; ++x) {
      const int g = got[static_cast<std::size_t>((r - 2) * 256 + x)];
      mismatches += g != argmax_oracle(r, x) || g != nearest_peak(r, x);
    }
  }
  verdict("3", mismatches == 0 && elapsed < 1.0,
          "R 2..64 x pixels 0..255: " + std::to_string(mismatches) + " mismatches against argmax and nearest peak, " +
              fmt(elapsed * 1e3) + " ms");
}

// ---- 4 ----------------------------------------------------------------------

void gradient_check() {
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto model = nn::make_small_cnn(8, 8, 2, seed);
    Rng rng(derive_seed(seed, {0x9c}));
    nn::Tensor x({2, 1, 8, 8});
    for (auto& v : x.values()) v = rng.uniform();
    std::vector<int> y{static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
    auto r = testing::check_gradients(model, x, y, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    kinks += r.kinks;
  }
  verdict("4", worst <= 1e-4 && checked > 0,
          "20 SmallCNN over 8x8, " + std::to_string(checked) + " coordinates, max relative error " + fmt(worst) +
              " (" + std::to_string(kinks) + " skipped at ReLU/max-pool switches)");
}

// ---- 5 ----------------------------------------------------------------------

void attack_soundness() {
  auto model = nn::make_small_cnn(8, 8, 2, 55);
  Rng rng(56);
  nn::Tensor x({200, 1, 8, 8});
  for (auto& v : x.values()) v = rng.uniform();
  const auto y = nn::predict(model, x);
  const attacks::AttackTarget target(model);

  bool in_ball = true;
  double worst_excess = -std::numeric_limits<double>::infinity();
  const double eps = 8.0 / 255.0;
  std::vector<attacks::AdversarialBatch> runs;
  runs.push_back(attacks::fgsm(target, x, y, eps));
  runs.push_back(attacks::bim(target, x, y, eps, 1.0 / 255.0, 10));
  runs.push_back(attacks::pgd(target, x, y, eps, 1.0 / 255.0, 10, false, 0));
  runs.push_back(attacks::pgd(target, x, y, eps, 1.0 / 255.0, 10, true, 9));
  for (const auto& adv : runs) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double v = adv.perturbed[j];
      worst_excess = std::max(worst_excess, std::abs(v - x[j]) - eps);
      in_ball &= std::abs(v - x[j]) <= eps + 1e-9 && v >= 0.0 && v <= 1.0;
    }
  }

  // Every prefix of the trajectory agrees bit for bit.
  bool identical = true;
  for (int steps = 1; steps <= 10; ++steps) {
    auto b = attacks::bim(target, x, y, eps, 1.0 / 255.0, steps);
    auto p = attacks::pgd(target, x, y, eps, 1.0 / 255.0, steps, false, 1234);
    identical &= b.perturbed.storage() == p.perturbed.storage() && b.iterations == p.iterations;
  }

  // DeepFool on a two-class linear model against the closed-form distance.
  const std::size_t d = 20;
  auto lin = nn::make_linear({d}, 2, 61);
  Rng wr(62);
  for (auto* p : lin.parameters()) {
    for (auto& v : p->values()) v = 0.3 * wr.normal();
  }
  nn::Tensor xl({200, d});
  for (auto& v : xl.values()) v = wr.uniform(0.3, 0.7);
  const auto yl = nn::predict(lin, xl);
  auto df = attacks::deepfool(attacks::AttackTarget(lin), xl, yl, 50);
  const auto& w = *lin.parameters()[0];
  const auto& b = *lin.parameters()[1];
  double worst_ratio = 0.0;
  std::size_t flipped = 0, compared = 0;
  for (std::size_t n = 0; n < 200; ++n) {
    double f = b[1] - b[0], norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dw = w[d + j] - w[j];
      f += dw * xl[n * d + j];
      norm2 += dw * dw;
    }
    const double closed = std::abs(f) / std::sqrt(norm2);
    bool inside = true;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = df.perturbed[n * d + j];
      inside &= v > 0.0 && v < 1.0;
    }
    if (!inside) continue;  // clipped to the box, the closed form no longer applies
    ++compared;
    flipped += df.fooled(n);
    worst_ratio = std::max(worst_ratio, std::abs(df.l2_norms[n] - closed) / closed);
  }
  const bool deepfool_ok = compared >= 100 && flipped == compared && worst_ratio <= 0.02 + 1e-12;

  verdict("5", in_ball && identical && deepfool_ok,
          "200 images: eps-ball and box " + std::string(in_ball ? "held" : "violated") + " (max excess " +
              fmt(worst_excess) + "), BIM == PGD(no random start) " + (identical ? "bit-identical" : "differs") +
              ", DeepFool " + std::to_string(flipped) + "/" + std::to_string(compared) +
              " crossed, max |l2 - d|/d = " + fmt(worst_ratio));
}

// ---- 6 and 7 ----------------------------------------------------------------

void cross_validated(const std::filesystem::path& out_dir) {
  auto plan = harness::parse_plan(harness::default_plan_text());
  const auto data = harness::make_testbed(harness::TestbedConfig{});
  std::cerr << "cross-validated run: " << data.size() << " images, " << plan.k_folds << " folds, "
            << plan.regimes.size() << " regimes, " << plan.attacks.size() << " attacks\n";
  const auto t0 = Clock::now();
  const auto table = harness::run_experiment(plan, data, [&](const std::string& m) {
    std::cerr << fmt(seconds_since(t0), 5) << "s " << m << "\n";
  });
  const double elapsed = seconds_since(t0);
  harness::write_results_csv(out_dir / "acceptance_results.csv", table);
  harness::write_results_json(out_dir / "acceptance_results.json", table);
  std::cout << harness::results_matrix(table);

  auto mean = [&](const std::string& regime, const std::string& cond) {
    const auto* c = table.find(regime, cond);
    return c && c->complete() ? c->mean : std::numeric_limits<double>::quiet_NaN();
  };
  auto retention = [&](const std::string& regime, double floor, std::string& detail) {
    const double clean = mean(regime, "clean");
    bool ok = std::isfinite(clean) && clean > 0.0;
    for (const auto& a : plan.attacks) {
      const auto name = attacks::attack_name(a.kind);
      const double ratio = mean(regime, name) / clean;
      ok &= ratio >= floor;  // NaN fails
      detail += " " + name + "=" + fmt(100.0 * ratio, 3) + "%";
    }
    return ok;
  };

  const double clean_clean = mean("clean", "clean");
  const double clean_bim = mean("clean", "bim");
  const double drop = clean_clean - clean_bim;
  verdict("6a", drop >= 0.40,
          "clean model: clean " + fmt(100 * clean_clean) + "%, BIM " + fmt(100 * clean_bim) + "%, drop " +
              fmt(100 * drop) + " points (need >= 40)");

  std::string fuit_detail;
  const bool fuit_ok = retention("fuit-r12", 0.90, fuit_detail);
  verdict("6b", fuit_ok, "fuit-r12 retention of clean accuracy (need >= 90% each):" + fuit_detail);

  const double fuit_clean = mean("fuit-r12", "clean");
  verdict("6c", std::abs(fuit_clean - clean_clean) <= 0.03,
          "clean accuracy fuit-r12 " + fmt(100 * fuit_clean) + "% vs clean model " + fmt(100 * clean_clean) +
              "% (need within 3 points); run took " + fmt(elapsed / 60.0, 3) + " min");

  std::string disc_detail;
  const bool disc_ok = retention("discretize-l32", 0.85, disc_detail);
  std::string versus;
  for (const auto& a : plan.attacks) {
    const auto name = attacks::attack_name(a.kind);
    versus += " " + name + " " + fmt(100 * mean("fuit-r12", name), 3) + "/" +
              fmt(100 * mean("discretize-l32", name), 3);
  }
  verdict("7", disc_ok,
          "discretize-l32 retention (need >= 85% each):" + disc_detail + "; fuit/discretize accuracy %:" + versus);
}

// ---- 8 ----------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(const std::filesystem::path& out_dir) {
  harness::TestbedConfig cfg;
  cfg.size = 120;
  cfg.rows = 8;
  cfg.cols = 8;
  const auto data = harness::make_testbed(cfg);
  auto plan = harness::parse_plan(harness::default_plan_text());
  plan.k_folds = 2;
  plan.train.max_epochs = 4;
  for (auto& a : plan.attacks) {
    if (a.kind == attacks::AttackKind::kCw) a.steps = 50;
  }
  std::vector<std::string> runs;
  for (int run = 0; run < 2; ++run) {
    const auto path = out_dir / ("acceptance_determinism_" + std::to_string(run) + ".csv");
    harness::write_results_csv(path, harness::run_experiment(plan, data));
    runs.push_back(slurp(path));
  }
  const bool same = !runs[0].empty() && runs[0] == runs[1];
  verdict("8", same,
          "two runs of one plan and seed: CSV reports " + std::string(same ? "byte-identical" : "differ") + " (" +
              std::to_string(runs[0].size()) + " bytes)");
}

// ---- 9 ----------------------------------------------------------------------

void cross_entropy_values() {
  const double zero = nn::cross_entropy(nn::Tensor({1, 3}), std::vector<int>{0});
  const double spot = nn::cross_entropy(nn::Tensor({1, 3}, std::vector<double>{1, 2, 3}), std::vector<int>{2});
  const bool pass = std::abs(zero - std::log(3.0)) <= 1e-12 && std::abs(spot - 0.40761) <= 1e-5;
  verdict("9", pass, "zero logits k=3: " + format_double(zero) + ", [1,2,3] class 2: " + format_double(spot));
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const auto out_dir = std::filesystem::current_path();
  try {
    worked_example();
    membership_algebra();
    quantizer_oracle();
    gradient_check();
    attack_soundness();
    if (quick) {
      std::cout << "criterion 6: SKIP  (--quick)\ncriterion 7: SKIP  (--quick)" << std::endl;
    } else {
      cross_validated(out_dir);
    }
    determinism(out_dir);
    cross_entropy_values();
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
