#pragma once

#include <Eigen/Dense>
#include <string>

#include "metamdl/data.hpp"

namespace metamdl {

/// Differentiable loss selector.  `bce_plus_dice` is the combined objective
/// bce(p,y) - soft_dice_term(p,y): minimizing it maximizes the dice term.
enum class LossFn { bce, soft_dice, bce_plus_dice };

LossFn loss_from_name(const std::string& name);     // throws ConfigError
std::string loss_name(LossFn fn);

/// Flattened predictions/targets for one mini-batch (all pixels of all
/// examples pooled, consistent with batch-level soft dice).
struct PredTargetPair {
  Vector pred;    // entries in [0, 1]
  Vector target;  // entries in {0, 1}
};

/// Flatten a (pred, target) matrix pair into pooled vectors; validates shape
/// agreement and binary targets.
PredTargetPair make_pair(const Matrix& pred, const Matrix& target);

/// Numerical guard used inside logs: probabilities are clamped to
/// [kProbEps, 1 - kProbEps] before taking logarithms.
inline constexpr double kProbEps = 1e-7;

/// Mean binary cross-entropy, standard negative-log-likelihood sign: always
/// >= 0, ~0 at a perfect prediction.
double bce(const PredTargetPair& pt);

/// Soft overlap term sum(y*p) / (sum(y) + sum(p)), in [0, 0.5]; returns 0
/// when the denominator vanishes (all-zero target and prediction) and sets
/// *degenerate if provided.
double soft_dice_term(const PredTargetPair& pt, bool* degenerate = nullptr);

/// bce - soft_dice_term, evaluated in one pass.
double combined_loss(const PredTargetPair& pt);

/// d(loss)/d(pred) for the given loss, including the batch-mean factor, so
/// downstream backprop applies no extra scaling.  Coordinates where the
/// probability clamp is active get zero bce-gradient.
Vector loss_grad(LossFn fn, const PredTargetPair& pt);

/// Dispatch by loss kind.
double loss_value(LossFn fn, const PredTargetPair& pt);

/// Hard Dice similarity 2*TP / (2*TP + FP + FN) on binary inputs; both-empty
/// convention: returns 1.  Throws ShapeError on non-binary predictions.
double dsc_metric(const PredTargetPair& pt);

/// Area under the ROC curve via the Mann-Whitney statistic with midranks for
/// ties; invariant to strictly monotone score transforms.  Throws
/// MetricError when targets contain a single class.
double auc_metric(const PredTargetPair& pt);

}  // namespace metamdl
