#include "fuit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fuit/loss.hpp"
#include "fuit/rng.hpp"
#include "fuit/train.hpp"

namespace fuit::attacks {

namespace {

constexpr std::size_t kChunk = 128;
constexpr double kTanhClamp = 1e-6;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_inputs(const AttackTarget& target, const Tensor& x, std::span<const int> y) {
  if (x.rank() == 0 || x.dim(0) != y.size()) {
    throw std::invalid_argument("attack: " + std::to_string(y.size()) + " labels for a batch of shape " +
                                nn::shape_string(x.shape()));
  }
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("attack: inputs must lie in [0, 1]");
  }
  const int k = static_cast<int>(target.num_classes());
  for (int label : y) {
    if (label < 0 || label >= k) throw std::invalid_argument("attack: label outside the model's classes");
  }
}

void check_finite(const Tensor& g, const char* attack) {
  for (double v : g.values()) {
    if (!std::isfinite(v)) throw nn::NonFiniteError(std::string(attack) + ": non-finite input gradient");
  }
}

AdversarialBatch start_batch(const AttackTarget& target, const Tensor& x, std::span<const int> y) {
  check_inputs(target, x, y);
  AdversarialBatch b;
  b.originals = x;
  b.perturbed = x;
  b.true_labels.assign(y.begin(), y.end());
  b.predicted_before = target.predict(x);
  b.status.assign(y.size(), ExampleStatus::kFailed);
  b.iterations.assign(y.size(), 0);
  b.diagnostics.assign(y.size(), "");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (b.predicted_before[i] != y[i]) b.status[i] = ExampleStatus::kAlreadyMisclassified;
  }
  return b;
}

// Rows that the attack should work on, split into fixed-size chunks.
std::vector<std::vector<std::size_t>> attackable_chunks(const AdversarialBatch& b) {
  std::vector<std::vector<std::size_t>> chunks;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.status[i] == ExampleStatus::kAlreadyMisclassified) continue;
    if (chunks.empty() || chunks.back().size() == kChunk) chunks.emplace_back();
    chunks.back().push_back(i);
  }
  return chunks;
}

std::vector<int> labels_of(const AdversarialBatch& b, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(b.true_labels[r]);
  return out;
}

void scatter(Tensor& dst, const Tensor& src, std::span<const std::size_t> rows) {
  const std::size_t d = dst.stride0();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.data() + i * d, d, dst.data() + rows[i] * d);
  }
}

void finish_batch(const AttackTarget& target, AdversarialBatch& b) {
  b.predicted_after = target.predict(b.perturbed);
  auto norms = perturbation_norms(b.originals, b.perturbed);
  b.linf_norms.clear();
  b.l2_norms.clear();
  for (const auto& n : norms) {
    b.linf_norms.push_back(n.linf);
    b.l2_norms.push_back(n.l2);
  }
}

void mark_by_prediction(AdversarialBatch& b) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.status[i] == ExampleStatus::kFailed && b.fooled(i)) b.status[i] = ExampleStatus::kSucceeded;
  }
}

// Shared sign-gradient loop for BIM and PGD: clip to [0,1], then project onto
// the L-inf ball around the original.
void linf_iterations(const AttackTarget& target, AdversarialBatch& b, const std::vector<std::size_t>& rows,
                     Tensor current, double epsilon, double alpha, int steps) {
  const Tensor original = b.originals.gather(rows);
  const auto labels = labels_of(b, rows);
  for (int t = 0; t < steps; ++t) {
    auto eval = target.loss_gradient(current, labels);
    check_finite(eval.input_grad, "iterative attack");
    for (std::size_t j = 0; j < current.size(); ++j) {
      double v = current[j] + alpha * sign(eval.input_grad[j]);
      v = std::clamp(v, 0.0, 1.0);
      v = std::clamp(v, original[j] - epsilon, original[j] + epsilon);
      current[j] = v;
    }
  }
  scatter(b.perturbed, current, rows);
  for (auto r : rows) b.iterations[r] = steps;
}

}  // namespace

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kBim: return "bim";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kPgdRandom: return "pgd-r";
    case AttackKind::kCw: return "cw";
    case AttackKind::kDeepFool: return "deepfool";
  }
  return "?";
}

AttackKind parse_attack_kind(const std::string& name) {
  for (auto kind : kAllAttacks) {
    if (attack_name(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown attack '" + name + "' (expected fgsm, bim, pgd, pgd-r, cw or deepfool)");
}

AttackSpec AttackSpec::defaults(AttackKind kind) {
  AttackSpec s;
  s.kind = kind;
  switch (kind) {
    case AttackKind::kPgd:
    case AttackKind::kPgdRandom:
      s.epsilon = 0.3;
      s.alpha = 4.0 / 255.0;
      s.steps = 40;
      s.random_start = kind == AttackKind::kPgdRandom;
      break;
    case AttackKind::kFgsm:
      s.epsilon = 0.008;
      break;
    case AttackKind::kCw:
      s.c = 2.0;
      s.kappa = 2.0;
      s.steps = 500;
      s.attack_lr = 0.01;
      break;
    case AttackKind::kDeepFool:
      s.steps = 20;
      s.overshoot = 0.02;
      break;
    case AttackKind::kBim:
      s.epsilon = 8.0 / 255.0;
      s.alpha = 1.0 / 255.0;
      s.steps = 10;
      break;
  }
  return s;
}

void AttackSpec::validate() const {
  const std::string name = attack_name(kind);
  auto fail = [&](const std::string& field, const std::string& why) {
    throw std::invalid_argument(name + "." + field + ": " + why);
  };
  auto need_eps = [&] {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) fail("epsilon", "must be in (0, 1]");
  };
  switch (kind) {
    case AttackKind::kFgsm:
      need_eps();
      break;
    case AttackKind::kBim:
    case AttackKind::kPgd:
    case AttackKind::kPgdRandom:
      need_eps();
      if (!(alpha > 0.0)) fail("alpha", "must be positive");
      if (alpha > epsilon) fail("alpha", "must not exceed epsilon");
      if (steps <= 0) fail("steps", "must be positive");
      break;
    case AttackKind::kCw:
      if (!(c >= 0.0) || !std::isfinite(c)) fail("c", "must be finite and non-negative");
      if (!(kappa >= 0.0) || !std::isfinite(kappa)) fail("kappa", "must be finite and non-negative");
      if (steps <= 0) fail("steps", "must be positive");
      if (!(attack_lr > 0.0)) fail("learning_rate", "must be positive");
      break;
    case AttackKind::kDeepFool:
      if (steps <= 0) fail("steps", "must be positive");
      if (!(overshoot >= 0.0)) fail("overshoot", "must be non-negative");
      break;
  }
}

AttackTarget::AttackTarget(const ModelGraph& model, InputTransform transform)
    : model_(&model), transform_(std::move(transform)) {}

Tensor AttackTarget::preprocess(const Tensor& x) const {
  Tensor t = x;
  if (transform_) transform_(t.values());
  return t;
}

Tensor AttackTarget::logits(const Tensor& x) const { return nn::forward(*model_, preprocess(x)); }

std::vector<int> AttackTarget::predict(const Tensor& x) const { return nn::predict(*model_, preprocess(x)); }

AttackTarget::Evaluation AttackTarget::vector_jacobian(const Tensor& x,
                                                       const std::function<Tensor(const Tensor&)>& seed_fn) const {
  auto trace = nn::forward_trace(*model_, preprocess(x));
  Tensor seed = seed_fn(trace.logits);
  auto grads = nn::backpropagate(*model_, trace, seed, false);
  return {std::move(trace.logits), std::move(grads.input)};
}

AttackTarget::Evaluation AttackTarget::loss_gradient(const Tensor& x, std::span<const int> labels) const {
  return vector_jacobian(x, [&](const Tensor& logits) {
    Tensor g = nn::cross_entropy_grad(logits, labels);
    // Undo the 1/N batch mean so each row is its own example's gradient.
    const double n = static_cast<double>(labels.size());
    for (auto& v : g.values()) v *= n;
    return g;
  });
}

std::string status_name(ExampleStatus status) {
  switch (status) {
    case ExampleStatus::kSucceeded: return "succeeded";
    case ExampleStatus::kFailed: return "failed";
    case ExampleStatus::kAlreadyMisclassified: return "already_misclassified";
    case ExampleStatus::kSkipped: return "skipped";
  }
  return "?";
}

double AdversarialBatch::adversarial_accuracy() const {
  if (size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < size(); ++i) correct += !fooled(i);
  return static_cast<double>(correct) / static_cast<double>(size());
}

AdversarialBatch fgsm(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("fgsm: epsilon must be non-negative");
  auto b = start_batch(target, x, y);
  for (const auto& rows : attackable_chunks(b)) {
    Tensor cur = x.gather(rows);
    auto eval = target.loss_gradient(cur, labels_of(b, rows));
    check_finite(eval.input_grad, "fgsm");
    for (std::size_t j = 0; j < cur.size(); ++j) {
      cur[j] = std::clamp(cur[j] + epsilon * sign(eval.input_grad[j]), 0.0, 1.0);
    }
    scatter(b.perturbed, cur, rows);
    for (auto r : rows) b.iterations[r] = 1;
  }
  finish_batch(target, b);
  mark_by_prediction(b);
  return b;
}

AdversarialBatch bim(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon,
                     double alpha, int steps) {
  return pgd(target, x, y, epsilon, alpha, steps, false, 0);
}

AdversarialBatch pgd(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon,
                     double alpha, int steps, bool random_start, std::uint64_t seed) {
  if (!(epsilon >= 0.0) || !(alpha >= 0.0) || steps < 0) {
    throw std::invalid_argument("pgd: epsilon, alpha and steps must be non-negative");
  }
  auto b = start_batch(target, x, y);
  const std::size_t d = x.stride0();
  for (const auto& rows : attackable_chunks(b)) {
    Tensor start = x.gather(rows);
    if (random_start) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        // One stream per example keeps results independent of chunking.
        Rng rng(derive_seed(seed, {rows[i]}));
        for (std::size_t j = 0; j < d; ++j) {
          double& v = start[i * d + j];
          v = std::clamp(v + rng.uniform(-epsilon, epsilon), 0.0, 1.0);
        }
      }
    }
    linf_iterations(target, b, rows, std::move(start), epsilon, alpha, steps);
  }
  finish_batch(target, b);
  mark_by_prediction(b);
  return b;
}

AdversarialBatch deepfool(const AttackTarget& target, const Tensor& x, std::span<const int> y, int max_steps,
                          double overshoot) {
  const std::size_t k = target.num_classes();
  if (k < 2) throw std::invalid_argument("deepfool: needs at least 2 classes");
  if (max_steps < 0 || !(overshoot >= 0.0)) throw std::invalid_argument("deepfool: bad steps or overshoot");
  auto b = start_batch(target, x, y);
  const std::size_t d = x.stride0();

  for (const auto& chunk : attackable_chunks(b)) {
    const Tensor original = x.gather(chunk);
    const auto labels = labels_of(b, chunk);
    const std::size_t n = chunk.size();
    std::vector<double> r_total(n * d, 0.0);
    Tensor current = original;
    std::vector<bool> done(n, false);

    for (int step = 0; step < max_steps; ++step) {
      auto pred = target.predict(current);
      std::vector<std::size_t> live;
      for (std::size_t i = 0; i < n; ++i) {
        if (!done[i] && pred[i] != labels[i]) done[i] = true;
        if (!done[i]) live.push_back(i);
      }
      if (live.empty()) break;

      Tensor xs = current.gather(live);
      std::vector<int> live_labels;
      for (auto i : live) live_labels.push_back(labels[i]);

      // Gradients of (f_j - f_label) for each competing class j = label + o.
      Tensor logits;
      std::vector<Tensor> diff_grads;
      for (std::size_t o = 1; o < k; ++o) {
        auto eval = target.vector_jacobian(xs, [&](const Tensor& z) {
          Tensor seed(z.shape());
          for (std::size_t i = 0; i < live.size(); ++i) {
            auto lab = static_cast<std::size_t>(live_labels[i]);
            seed[i * k + (lab + o) % k] = 1.0;
            seed[i * k + lab] = -1.0;
          }
          return seed;
        });
        if (o == 1) logits = std::move(eval.logits);
        diff_grads.push_back(std::move(eval.input_grad));
      }

      for (std::size_t li = 0; li < live.size(); ++li) {
        const std::size_t i = live[li];
        const auto lab = static_cast<std::size_t>(live_labels[li]);
        double best_ratio = std::numeric_limits<double>::infinity();
        std::size_t best_o = 0;
        double best_f = 0.0, best_norm2 = 0.0;
        for (std::size_t o = 1; o < k; ++o) {
          const double f = logits[li * k + (lab + o) % k] - logits[li * k + lab];
          const double* w = diff_grads[o - 1].data() + li * d;
          double norm2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) norm2 += w[j] * w[j];
          if (!(norm2 > 0.0) || !std::isfinite(norm2) || !std::isfinite(f)) continue;
          double ratio = std::abs(f) / std::sqrt(norm2);
          if (ratio < best_ratio) {
            best_ratio = ratio;
            best_o = o;
            best_f = f;
            best_norm2 = norm2;
          }
        }
        const std::size_t row = chunk[i];
        if (best_o == 0) {
          b.status[row] = ExampleStatus::kSkipped;
          b.diagnostics[row] = "zero gradient difference at step " + std::to_string(step);
          done[i] = true;
          std::fill_n(r_total.begin() + static_cast<std::ptrdiff_t>(i * d), d, 0.0);
          std::copy_n(original.data() + i * d, d, current.data() + i * d);
          continue;
        }
        const double scale = std::abs(best_f) / best_norm2;
        const double* w = diff_grads[best_o - 1].data() + li * d;
        for (std::size_t j = 0; j < d; ++j) {
          r_total[i * d + j] += scale * w[j];
          current[i * d + j] = std::clamp(original[i * d + j] + (1.0 + overshoot) * r_total[i * d + j], 0.0, 1.0);
        }
        b.iterations[row] = step + 1;
      }
    }
    scatter(b.perturbed, current, chunk);
  }
  finish_batch(target, b);
  mark_by_prediction(b);
  return b;
}

AdversarialBatch cw_l2(const AttackTarget& target, const Tensor& x, std::span<const int> y, double c,
                       double kappa, int steps, double attack_lr) {
  if (!(c >= 0.0) || !(kappa >= 0.0) || steps < 0 || !(attack_lr > 0.0)) {
    throw std::invalid_argument("cw: c, kappa must be non-negative, learning rate positive");
  }
  const std::size_t k = target.num_classes();
  auto b = start_batch(target, x, y);
  const std::size_t d = x.stride0();

  for (const auto& chunk : attackable_chunks(b)) {
    const Tensor original = x.gather(chunk);
    const auto labels = labels_of(b, chunk);
    const std::size_t n = chunk.size();

    std::vector<double> w(n * d);
    for (std::size_t j = 0; j < w.size(); ++j) {
      double v = std::clamp(original[j], kTanhClamp, 1.0 - kTanhClamp);
      w[j] = std::atanh(2.0 * v - 1.0);
    }
    std::vector<double> best(original.storage());
    std::vector<double> best_dist(n, std::numeric_limits<double>::infinity());
    std::vector<bool> aborted(n, false);
    std::vector<std::string> why(n);
    std::vector<int> found_at(n, -1);

    const std::size_t block = w.size();
    auto adam = nn::AdamState::for_sizes(std::span<const std::size_t>(&block, 1));
    Tensor xp(original.shape());
    std::vector<double> grad_w(w.size());
    std::vector<double> hinge(n);
    std::vector<std::size_t> rival(n);

    auto margin_seed = [&](const Tensor& z) {
      Tensor seed(z.shape());
      for (std::size_t i = 0; i < n; ++i) {
        const auto t = static_cast<std::size_t>(labels[i]);
        std::size_t other = t == 0 ? 1 : 0;
        for (std::size_t j = 0; j < k; ++j) {
          if (j != t && z[i * k + j] > z[i * k + other]) other = j;
        }
        rival[i] = other;
        hinge[i] = z[i * k + t] - z[i * k + other] + kappa;
        if (hinge[i] > 0.0 && !aborted[i]) {
          seed[i * k + t] = c;
          seed[i * k + other] = -c;
        }
      }
      return seed;
    };

    auto record = [&](int step) {
      for (std::size_t i = 0; i < n; ++i) {
        if (aborted[i]) continue;
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          double diff = xp[i * d + j] - original[i * d + j];
          dist += diff * diff;
        }
        double objective = dist + c * std::max(hinge[i], 0.0);
        if (!std::isfinite(objective)) {
          aborted[i] = true;
          why[i] = "non-finite objective at step " + std::to_string(step);
          continue;
        }
        if (hinge[i] <= 0.0 && dist < best_dist[i]) {
          best_dist[i] = dist;
          std::copy_n(xp.data() + i * d, d, best.begin() + static_cast<std::ptrdiff_t>(i * d));
          if (found_at[i] < 0) found_at[i] = step;
        }
      }
    };

    for (int step = 0; step <= steps; ++step) {
      for (std::size_t j = 0; j < w.size(); ++j) xp[j] = 0.5 * (std::tanh(w[j]) + 1.0);
      auto eval = target.vector_jacobian(xp, margin_seed);
      record(step);
      if (step == steps) break;  // the last pass only scores the final iterate
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i * d; j < (i + 1) * d; ++j) {
          if (aborted[i]) {
            grad_w[j] = 0.0;
            continue;
          }
          const double th = std::tanh(w[j]);
          const double dxp = 2.0 * (xp[j] - original[j]) + eval.input_grad[j];
          grad_w[j] = dxp * 0.5 * (1.0 - th * th);
          if (!std::isfinite(grad_w[j])) {
            aborted[i] = true;
            why[i] = "non-finite gradient at step " + std::to_string(step);
          }
        }
      }
      std::span<double> wp(w);
      std::span<const double> gp(grad_w);
      nn::adam_step(std::span<const std::span<double>>(&wp, 1), std::span<const std::span<const double>>(&gp, 1),
                    adam, attack_lr);
    }

    Tensor result(original.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = chunk[i];
      b.iterations[row] = steps;
      if (aborted[i]) {
        b.status[row] = ExampleStatus::kSkipped;
        b.diagnostics[row] = why[i];
        std::copy_n(original.data() + i * d, d, result.data() + i * d);
      } else if (std::isfinite(best_dist[i])) {
        b.status[row] = ExampleStatus::kSucceeded;
        std::copy_n(best.begin() + static_cast<std::ptrdiff_t>(i * d), d, result.data() + i * d);
      } else {
        b.status[row] = ExampleStatus::kFailed;
        std::copy_n(original.data() + i * d, d, result.data() + i * d);
      }
    }
    scatter(b.perturbed, result, chunk);
  }
  finish_batch(target, b);
  return b;
}

AdversarialBatch run_attack(const AttackTarget& target, const Tensor& x, std::span<const int> y,
                            const AttackSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case AttackKind::kFgsm: return fgsm(target, x, y, spec.epsilon);
    case AttackKind::kBim: return bim(target, x, y, spec.epsilon, spec.alpha, spec.steps);
    case AttackKind::kPgd:
    case AttackKind::kPgdRandom:
      return pgd(target, x, y, spec.epsilon, spec.alpha, spec.steps, spec.random_start, spec.seed);
    case AttackKind::kCw: return cw_l2(target, x, y, spec.c, spec.kappa, spec.steps, spec.attack_lr);
    case AttackKind::kDeepFool: return deepfool(target, x, y, spec.steps, spec.overshoot);
  }
  throw std::invalid_argument("unhandled attack kind");
}

void rescore(AdversarialBatch& batch, const AttackTarget& judge) {
  batch.predicted_before = judge.predict(batch.originals);
  batch.predicted_after = judge.predict(batch.perturbed);
}

std::vector<PerturbationNorm> perturbation_norms(const Tensor& originals, const Tensor& perturbed) {
  if (originals.shape() != perturbed.shape()) {
    throw nn::ShapeError("perturbation_norms: shapes " + nn::shape_string(originals.shape()) + " and " +
                         nn::shape_string(perturbed.shape()) + " differ");
  }
  std::vector<PerturbationNorm> out;
  if (originals.rank() == 0) return out;
  const std::size_t d = originals.stride0();
  for (std::size_t i = 0; i < originals.dim(0); ++i) {
    PerturbationNorm pn;
    double sq = 0.0;
    for (std::size_t j = i * d; j < (i + 1) * d; ++j) {
      double diff = perturbed[j] - originals[j];
      pn.linf = std::max(pn.linf, std::abs(diff));
      sq += diff * diff;
    }
    pn.l2 = std::sqrt(sq);
    out.push_back(pn);
  }
  return out;
}

std::vector<PerturbationNorm> perturbation_norms(const AdversarialBatch& batch) {
  return perturbation_norms(batch.originals, batch.perturbed);
}

}  // namespace fuit::attacks
