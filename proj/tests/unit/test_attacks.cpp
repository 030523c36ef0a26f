#include <doctest.h>

#include <cmath>

#include "fuit/attacks.hpp"
#include "fuit/loss.hpp"
#include "fuit/regime.hpp"
#include "fuit/rng.hpp"
#include "fuit/testbed.hpp"
#include "fuit/train.hpp"

using namespace fuit;
using namespace fuit::attacks;
using nn::Tensor;

namespace {

Tensor random_unit(nn::Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Two-class linear model over d inputs with Gaussian weights.
nn::ModelGraph linear_model(std::size_t d, std::uint64_t seed, double scale = 1.0) {
  auto m = nn::make_linear({d}, 2, seed);
  Rng rng(seed + 1);
  for (auto* p : m.parameters()) {
    for (auto& v : p->values()) v = scale * rng.normal();
  }
  (*m.parameters()[1])[0] = 0.0;
  (*m.parameters()[1])[1] = 0.0;
  return m;
}

std::vector<int> predicted(const nn::ModelGraph& m, const Tensor& x) { return nn::predict(m, x); }

}  // namespace

TEST_CASE("attack defaults and validation") {
  auto pgd = AttackSpec::defaults(AttackKind::kPgd);
  CHECK(pgd.epsilon == 0.3);
  CHECK(pgd.alpha == 4.0 / 255.0);
  CHECK(pgd.steps == 40);
  CHECK(!pgd.random_start);
  CHECK(AttackSpec::defaults(AttackKind::kPgdRandom).random_start);
  CHECK(AttackSpec::defaults(AttackKind::kFgsm).epsilon == 0.008);
  auto cw = AttackSpec::defaults(AttackKind::kCw);
  CHECK(cw.c == 2.0);
  CHECK(cw.kappa == 2.0);
  CHECK(cw.steps == 500);
  CHECK(cw.attack_lr == 0.01);
  CHECK(AttackSpec::defaults(AttackKind::kDeepFool).steps == 20);
  auto bim = AttackSpec::defaults(AttackKind::kBim);
  CHECK(bim.epsilon == 8.0 / 255.0);
  CHECK(bim.alpha == 1.0 / 255.0);
  CHECK(bim.steps == 10);
  for (auto k : kAllAttacks) CHECK_NOTHROW(AttackSpec::defaults(k).validate());

  bim.alpha = 1.0;
  CHECK_THROWS_WITH_AS(bim.validate(), doctest::Contains("bim.alpha"), std::invalid_argument);
  auto fgsm = AttackSpec::defaults(AttackKind::kFgsm);
  fgsm.epsilon = 1.5;
  CHECK_THROWS_WITH_AS(fgsm.validate(), doctest::Contains("fgsm.epsilon"), std::invalid_argument);
  CHECK(parse_attack_kind("pgd-r") == AttackKind::kPgdRandom);
  CHECK_THROWS_WITH_AS(parse_attack_kind("jsma"), doctest::Contains("jsma"), std::invalid_argument);
}

TEST_CASE("fgsm on a linear model follows the sign of the weight difference") {
  const std::size_t d = 20;
  auto m = linear_model(d, 3);
  const auto& w = *m.parameters()[0];
  auto x = random_unit({30, d}, 4, 0.2, 0.8);
  auto y = predicted(m, x);  // start from correctly classified points
  AttackTarget target(m);
  const double eps = 0.05;
  auto adv = fgsm(target, x, y, eps);
  for (std::size_t n = 0; n < 30; ++n) {
    const std::size_t t = static_cast<std::size_t>(y[n]), o = 1 - t;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = w[o * d + j] - w[t * d + j];
      const double expect = x[n * d + j] + eps * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
      CHECK(adv.perturbed[n * d + j] == doctest::Approx(expect).epsilon(1e-15));
    }
  }
}

TEST_CASE("zero epsilon leaves inputs unchanged") {
  auto m = nn::make_small_cnn(8, 8, 2, 1);
  auto x = random_unit({5, 1, 8, 8}, 2);
  std::vector<int> y{0, 1, 0, 1, 0};
  AttackTarget target(m);
  CHECK(fgsm(target, x, y, 0.0).perturbed == x);
  CHECK(pgd(target, x, y, 0.0, 0.0, 5, true, 3).perturbed == x);
}

TEST_CASE("iterative attacks stay in the epsilon ball and the unit box") {
  auto m = nn::make_small_cnn(8, 8, 3, 2);
  auto x = random_unit({40, 1, 8, 8}, 5);
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) y.push_back(i % 3);
  AttackTarget target(m);
  for (double eps : {0.008, 8.0 / 255.0, 0.3}) {
    for (auto adv : {fgsm(target, x, y, eps), bim(target, x, y, eps, eps / 4, 10),
                     pgd(target, x, y, eps, eps / 4, 10, true, 9)}) {
      for (std::size_t i = 0; i < adv.size(); ++i) CHECK(adv.linf_norms[i] <= eps + 1e-9);
      for (double v : adv.perturbed.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("bim equals pgd without random start, and one step equals fgsm") {
  auto m = nn::make_small_cnn(8, 8, 2, 7);
  auto x = random_unit({20, 1, 8, 8}, 8);
  std::vector<int> y(20, 1);
  AttackTarget target(m);
  auto a = bim(target, x, y, 8.0 / 255.0, 1.0 / 255.0, 10);
  auto b = pgd(target, x, y, 8.0 / 255.0, 1.0 / 255.0, 10, false, 12345);
  CHECK(a.perturbed == b.perturbed);
  CHECK(a.predicted_after == b.predicted_after);
  CHECK(bim(target, x, y, 0.01, 0.01, 1).perturbed == fgsm(target, x, y, 0.01).perturbed);
}

TEST_CASE("pgd with random start is seeded") {
  auto m = nn::make_small_cnn(8, 8, 2, 7);
  auto x = random_unit({10, 1, 8, 8}, 8);
  std::vector<int> y(10, 0);
  AttackTarget target(m);
  auto a = pgd(target, x, y, 0.1, 0.01, 3, true, 1);
  auto b = pgd(target, x, y, 0.1, 0.01, 3, true, 1);
  auto c = pgd(target, x, y, 0.1, 0.01, 3, true, 2);
  CHECK(a.perturbed == b.perturbed);
  CHECK(a.status == b.status);
  CHECK_FALSE(a.perturbed == c.perturbed);
}

TEST_CASE("already misclassified examples are returned unchanged") {
  auto m = linear_model(6, 11);
  auto x = random_unit({8, 6}, 12, 0.3, 0.7);
  auto y = predicted(m, x);
  for (auto& v : y) v = 1 - v;  // every example is wrong
  AttackTarget target(m);
  for (auto adv : {fgsm(target, x, y, 0.1), deepfool(target, x, y, 20), cw_l2(target, x, y, 2, 2, 10, 0.01)}) {
    CHECK(adv.perturbed == x);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv.status[i] == ExampleStatus::kAlreadyMisclassified);
      CHECK(adv.iterations[i] == 0);
      CHECK(adv.fooled(i));
    }
    CHECK(adv.adversarial_accuracy() == 0.0);
  }
}

TEST_CASE("deepfool reaches the hyperplane of a linear classifier") {
  const std::size_t d = 16;
  auto m = linear_model(d, 21, 0.5);
  const auto& w = *m.parameters()[0];
  auto x = random_unit({25, d}, 22, 0.45, 0.55);
  auto y = predicted(m, x);
  AttackTarget target(m);
  auto adv = deepfool(target, x, y, 20);
  for (std::size_t n = 0; n < 25; ++n) {
    double f = 0.0, w2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double wd = w[d + j] - w[j];
      f += wd * x[n * d + j];
      w2 += wd * wd;
    }
    const double dist = std::abs(f) / std::sqrt(w2);
    CHECK(adv.iterations[n] == 1);
    CHECK(adv.fooled(n));
    CHECK(std::abs(adv.l2_norms[n] - dist) <= 0.02 * dist + 1e-12);

    // FGSM with the smallest flipping epsilon needs at least as much L2.
    double w1 = 0.0;
    for (std::size_t j = 0; j < d; ++j) w1 += std::abs(w[d + j] - w[j]);
    const double eps = std::abs(f) / w1 * (1.0 + 1e-9);
    auto fg = fgsm(target, x.slice(n, n + 1), std::vector<int>{y[n]}, eps);
    CHECK(fg.fooled(0));
    CHECK(adv.l2_norms[n] <= fg.l2_norms[0]);
  }
}

TEST_CASE("deepfool flags a zero gradient difference") {
  auto m = nn::make_linear({4}, 2, 1);
  for (auto* p : m.parameters()) p->fill(0.0);
  auto x = random_unit({3, 4}, 1);
  std::vector<int> y(3, 0);  // ties resolve to class 0, so these are "correct"
  auto adv = deepfool(AttackTarget(m), x, y, 20);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(adv.status[i] == ExampleStatus::kSkipped);
    CHECK(!adv.diagnostics[i].empty());
  }
  CHECK(adv.perturbed == x);
}

TEST_CASE("cw with c = 0 stays at the input and fails") {
  auto m = linear_model(10, 31);
  auto x = random_unit({6, 10}, 32, 0.1, 0.9);
  auto y = predicted(m, x);
  auto adv = cw_l2(AttackTarget(m), x, y, 0.0, 2.0, 50, 0.01);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    CHECK(adv.status[i] == ExampleStatus::kFailed);
    CHECK(adv.linf_norms[i] <= 1e-9);
  }
}

TEST_CASE("cw successes clear the kappa margin") {
  auto m = linear_model(10, 41, 2.0);
  auto x = random_unit({20, 10}, 42, 0.3, 0.7);
  auto y = predicted(m, x);
  const double kappa = 2.0;
  auto adv = cw_l2(AttackTarget(m), x, y, 2.0, kappa, 300, 0.05);
  auto logits = nn::forward(m, adv.perturbed);
  int successes = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    if (adv.status[i] != ExampleStatus::kSucceeded) continue;
    ++successes;
    const auto t = static_cast<std::size_t>(y[i]);
    CHECK(logits[i * 2 + (1 - t)] - logits[i * 2 + t] >= kappa - 1e-6);
  }
  CHECK(successes > 0);
  for (double v : adv.perturbed.values()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("attacks reject bad inputs") {
  auto m = linear_model(4, 1);
  AttackTarget target(m);
  Tensor x({2, 4}, 0.5);
  CHECK_THROWS_AS(fgsm(target, x, std::vector<int>{0}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(fgsm(target, x, std::vector<int>{0, 5}, 0.1), std::invalid_argument);
  x[0] = 1.5;
  CHECK_THROWS_AS(fgsm(target, x, std::vector<int>{0, 1}, 0.1), std::invalid_argument);
}

TEST_CASE("perturbation norms") {
  Tensor a({2, 3}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  auto same = perturbation_norms(a, a);
  CHECK(same[0].linf == 0.0);
  CHECK(same[1].l2 == 0.0);
  Tensor b = a;
  b[4] += 0.25;
  auto one = perturbation_norms(a, b);
  CHECK(one[1].linf == doctest::Approx(0.25));
  CHECK(one[1].l2 == doctest::Approx(0.25));
  CHECK(one[0].l2 == 0.0);
  auto p = random_unit({4, 7}, 1), q = random_unit({4, 7}, 2);
  auto r = perturbation_norms(p, q);
  for (std::size_t n = 0; n < 4; ++n) {
    double linf = 0.0, l2 = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      double diff = q[n * 7 + j] - p[n * 7 + j];
      linf = std::max(linf, std::abs(diff));
      l2 += diff * diff;
    }
    CHECK(r[n].linf == doctest::Approx(linf).epsilon(1e-15));
    CHECK(r[n].l2 == doctest::Approx(std::sqrt(l2)).epsilon(1e-14));
  }
  CHECK_THROWS(perturbation_norms(p, Tensor({4, 6})));
}

TEST_CASE("rescore judges through a transform") {
  auto m = nn::make_small_cnn(8, 8, 2, 3);
  auto x = random_unit({6, 1, 8, 8}, 4);
  std::vector<int> y(6, 0);
  auto regime = harness::Regime::fuit(12);
  AttackTarget bare(m), judge(m, regime.attack_transform());
  auto adv = fgsm(bare, x, y, 0.05);
  rescore(adv, judge);
  Tensor t = adv.perturbed;
  regime.apply(t.values());
  CHECK(adv.predicted_after == nn::predict(m, t));
}

TEST_CASE("attack strength ordering on a trained model") {
  // Small desk run on the synthetic corpus.
  harness::TestbedConfig cfg;
  cfg.size = 600;
  auto data = harness::make_testbed(cfg);
  std::vector<ImageU8> train_imgs(data.images.begin(), data.images.begin() + 400);
  std::vector<ImageU8> test_imgs(data.images.begin() + 400, data.images.end());
  std::vector<int> train_y(data.labels.begin(), data.labels.begin() + 400);
  std::vector<int> test_y(data.labels.begin() + 400, data.labels.end());
  nn::TrainConfig tc;
  tc.max_epochs = 15;
  tc.seed = 1;
  nn::LabeledData tr{harness::unit_batch(train_imgs), train_y};
  nn::LabeledData te{harness::unit_batch(test_imgs), test_y};
  auto model = nn::train(nn::make_small_cnn(16, 16, 2, 2), tr, te, tc).model;
  AttackTarget target(model);

  const double eps = 8.0 / 255.0;
  auto f = fgsm(target, te.inputs, test_y, eps);
  auto b = bim(target, te.inputs, test_y, eps, 1.0 / 255.0, 10);
  auto p = pgd(target, te.inputs, test_y, eps, 1.0 / 255.0, 40, false, 0);
  CHECK(b.adversarial_accuracy() <= f.adversarial_accuracy());
  CHECK(p.adversarial_accuracy() <= f.adversarial_accuracy() + 0.02);

  auto unbounded = fgsm(target, te.inputs, test_y, 1.0);
  auto cw = cw_l2(target, te.inputs, test_y, 2.0, 2.0, 500, 0.01);
  CHECK(1.0 - cw.adversarial_accuracy() >= 1.0 - unbounded.adversarial_accuracy());
}
