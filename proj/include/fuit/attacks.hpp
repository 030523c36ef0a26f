#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fuit/model.hpp"

namespace fuit::attacks {

using nn::ModelGraph;
using nn::Tensor;

enum class AttackKind { kFgsm, kBim, kPgd, kPgdRandom, kCw, kDeepFool };

inline constexpr AttackKind kAllAttacks[] = {AttackKind::kPgd, AttackKind::kPgdRandom, AttackKind::kFgsm,
                                             AttackKind::kCw,  AttackKind::kDeepFool,  AttackKind::kBim};

/// CLI spelling: fgsm, bim, pgd, pgd-r, cw, deepfool.
std::string attack_name(AttackKind kind);
/// Throws std::invalid_argument naming the bad value.
AttackKind parse_attack_kind(const std::string& name);

/// One attack and its parameters. All distances are on the [0,1] input scale.
struct AttackSpec {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.0;
  double alpha = 0.0;
  int steps = 0;
  double c = 0.0;
  double kappa = 0.0;
  double attack_lr = 0.0;
  bool random_start = false;
  double overshoot = 0.02;  // DeepFool only
  std::uint64_t seed = 0;

  /// Parameter table used throughout the evaluation:
  ///   PGD      eps=0.3   alpha=4/255 steps=40
  ///   PGD-r    eps=0.3   alpha=4/255 steps=40 random start
  ///   FGSM     eps=0.008
  ///   CW       c=2 kappa=2 steps=500 lr=0.01
  ///   DeepFool steps=20 (overshoot 0.02)
  ///   BIM      eps=8/255 alpha=1/255 steps=10
  static AttackSpec defaults(AttackKind kind);

  /// Throws std::invalid_argument listing the offending field.
  void validate() const;
};

/// Per-example preprocessing applied in front of the network (e.g. a
/// quantizing defense). It acts in place on one batch's values.
using InputTransform = std::function<void(std::span<double>)>;

/// A model seen through an optional input transform: logits of
/// model(transform(x)), with input gradients that treat the transform as the
/// identity. Without a transform this is the bare network.
class AttackTarget {
 public:
  explicit AttackTarget(const ModelGraph& model, InputTransform transform = {});

  const ModelGraph& model() const { return *model_; }
  std::size_t num_classes() const { return model_->num_classes(); }

  Tensor logits(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;

  struct Evaluation {
    Tensor logits;
    Tensor input_grad;
  };
  /// Logits at x and the gradient of sum_n <seed_n, logits_n> with respect to
  /// x, where seed_fn builds the seed from the logits.
  Evaluation vector_jacobian(const Tensor& x, const std::function<Tensor(const Tensor&)>& seed_fn) const;
  /// Gradient of the per-example cross-entropy (summed, so each row is that
  /// example's own gradient).
  Evaluation loss_gradient(const Tensor& x, std::span<const int> labels) const;

 private:
  Tensor preprocess(const Tensor& x) const;

  const ModelGraph* model_;
  InputTransform transform_;
};

enum class ExampleStatus {
  kSucceeded,             // prediction changed (CW: margin kappa reached)
  kFailed,                // attack ran to completion without success
  kAlreadyMisclassified,  // returned unchanged, counted as success
  kSkipped,               // numerical problem; returned unchanged, see diagnostic
};

std::string status_name(ExampleStatus status);

struct AdversarialBatch {
  Tensor originals;
  Tensor perturbed;
  std::vector<int> true_labels;
  std::vector<int> predicted_before;
  std::vector<int> predicted_after;
  std::vector<double> linf_norms;
  std::vector<double> l2_norms;
  std::vector<ExampleStatus> status;
  std::vector<int> iterations;
  std::vector<std::string> diagnostics;

  std::size_t size() const { return true_labels.size(); }
  bool fooled(std::size_t i) const { return predicted_after[i] != true_labels[i]; }
  /// Fraction of examples whose final prediction equals the true label.
  double adversarial_accuracy() const;
};

AdversarialBatch fgsm(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon);

AdversarialBatch bim(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon,
                     double alpha, int steps);

AdversarialBatch pgd(const AttackTarget& target, const Tensor& x, std::span<const int> y, double epsilon,
                     double alpha, int steps, bool random_start, std::uint64_t seed);

/// Iterative linearisation toward the nearest decision boundary (L2), at most
/// max_steps iterations, final point pushed past it by (1 + overshoot).
AdversarialBatch deepfool(const AttackTarget& target, const Tensor& x, std::span<const int> y, int max_steps,
                          double overshoot = 0.02);

/// Carlini-Wagner L2 with x' = (tanh(w) + 1) / 2, fixed trade-off c and
/// margin kappa, optimised by Adam for `steps` iterations. Returns the
/// closest iterate that reached the margin; failed examples are unchanged.
AdversarialBatch cw_l2(const AttackTarget& target, const Tensor& x, std::span<const int> y, double c,
                       double kappa, int steps, double attack_lr);

AdversarialBatch run_attack(const AttackTarget& target, const Tensor& x, std::span<const int> y,
                            const AttackSpec& spec);

/// Recomputes predicted_before and predicted_after through `judge`, e.g. the
/// network with a defense transform in front. Status flags keep the verdict
/// of the view the attack was generated against.
void rescore(AdversarialBatch& batch, const AttackTarget& judge);

struct PerturbationNorm {
  double linf = 0.0;
  double l2 = 0.0;
};

std::vector<PerturbationNorm> perturbation_norms(const AdversarialBatch& batch);
std::vector<PerturbationNorm> perturbation_norms(const Tensor& originals, const Tensor& perturbed);

}  // namespace fuit::attacks
