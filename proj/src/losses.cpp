#include "metamdl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metamdl/error.hpp"

namespace metamdl {

LossFn loss_from_name(const std::string& name) {
  if (name == "bce") return LossFn::bce;
  if (name == "soft_dice") return LossFn::soft_dice;
  if (name == "bce_plus_dice") return LossFn::bce_plus_dice;
  throw ConfigError("unknown loss: " + name);
}

std::string loss_name(LossFn fn) {
  switch (fn) {
    case LossFn::bce: return "bce";
    case LossFn::soft_dice: return "soft_dice";
    case LossFn::bce_plus_dice: return "bce_plus_dice";
  }
  throw ConfigError("bad LossFn value");
}

PredTargetPair make_pair(const Matrix& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("pred/target shape mismatch");
  }
  PredTargetPair pt;
  pt.pred = Eigen::Map<const Vector>(pred.data(), pred.size());
  pt.target = Eigen::Map<const Vector>(target.data(), target.size());
  return pt;
}

namespace {

void check_pair(const PredTargetPair& pt) {
  if (pt.pred.size() != pt.target.size()) {
    throw ShapeError("pred/target length mismatch: " +
                     std::to_string(pt.pred.size()) + " vs " +
                     std::to_string(pt.target.size()));
  }
  if (pt.pred.size() == 0) throw ShapeError("empty prediction vector");
  for (Eigen::Index i = 0; i < pt.target.size(); ++i) {
    if (pt.target[i] != 0.0 && pt.target[i] != 1.0) {
      throw ShapeError("targets must be binary");
    }
  }
}

inline double clamp_prob(double p) {
  return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

}  // namespace

double bce(const PredTargetPair& pt) {
  check_pair(pt);
  const Eigen::Index n = pt.pred.size();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = clamp_prob(pt.pred[i]);
    const double y = pt.target[i];
    acc += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(n);
}

double soft_dice_term(const PredTargetPair& pt, bool* degenerate) {
  check_pair(pt);
  // Raw (unclamped) probabilities: the clamp is a log guard only.
  const double num = pt.pred.dot(pt.target);
  const double den = pt.pred.sum() + pt.target.sum();
  if (degenerate) *degenerate = (den == 0.0);
  if (den == 0.0) return 0.0;
  return num / den;
}

double combined_loss(const PredTargetPair& pt) {
  return bce(pt) - soft_dice_term(pt);
}

double loss_value(LossFn fn, const PredTargetPair& pt) {
  switch (fn) {
    case LossFn::bce: return bce(pt);
    case LossFn::soft_dice: return soft_dice_term(pt);
    case LossFn::bce_plus_dice: return combined_loss(pt);
  }
  throw ConfigError("bad LossFn value");
}

namespace {

Vector bce_grad(const PredTargetPair& pt) {
  const Eigen::Index n = pt.pred.size();
  Vector g(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = pt.pred[i];
    if (p < kProbEps || p > 1.0 - kProbEps) {
      g[i] = 0.0;  // clamp active: flat in p
      continue;
    }
    const double y = pt.target[i];
    g[i] = inv_n * ((1.0 - y) / (1.0 - p) - y / p);
  }
  return g;
}

Vector dice_grad(const PredTargetPair& pt) {
  const double num = pt.pred.dot(pt.target);
  const double den = pt.pred.sum() + pt.target.sum();
  const Eigen::Index n = pt.pred.size();
  if (den == 0.0) return Vector::Zero(n);
  Vector g(n);
  const double ratio = num / (den * den);
  for (Eigen::Index i = 0; i < n; ++i) {
    g[i] = pt.target[i] / den - ratio;
  }
  return g;
}

}  // namespace

Vector loss_grad(LossFn fn, const PredTargetPair& pt) {
  check_pair(pt);
  switch (fn) {
    case LossFn::bce: return bce_grad(pt);
    case LossFn::soft_dice: return dice_grad(pt);
    case LossFn::bce_plus_dice: return bce_grad(pt) - dice_grad(pt);
  }
  throw ConfigError("bad LossFn value");
}

double dsc_metric(const PredTargetPair& pt) {
  check_pair(pt);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (Eigen::Index i = 0; i < pt.pred.size(); ++i) {
    const double p = pt.pred[i];
    if (p != 0.0 && p != 1.0) {
      throw ShapeError("dsc_metric expects binary predictions");
    }
    const double y = pt.target[i];
    if (p == 1.0 && y == 1.0) tp += 1.0;
    else if (p == 1.0) fp += 1.0;
    else if (y == 1.0) fn += 1.0;
  }
  const double den = 2.0 * tp + fp + fn;
  if (den == 0.0) return 1.0;  // both empty: perfect agreement
  return 2.0 * tp / den;
}

double auc_metric(const PredTargetPair& pt) {
  check_pair(pt);
  const Eigen::Index n = pt.pred.size();
  double n_pos = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) n_pos += pt.target[i];
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw MetricError("auc undefined: targets contain a single class");
  }

  // Midrank Mann-Whitney: rank all scores, average ranks inside tie groups,
  // AUC = (sum of positive ranks - n_pos(n_pos+1)/2) / (n_pos * n_neg).
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return pt.pred[a] < pt.pred[b];
  });

  double rank_sum_pos = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && pt.pred[order[static_cast<std::size_t>(j)]] ==
                        pt.pred[order[static_cast<std::size_t>(i)]]) {
      ++j;
    }
    // Ranks are 1-based; ties share the mean rank of their block [i, j).
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (Eigen::Index k = i; k < j; ++k) {
      if (pt.target[order[static_cast<std::size_t>(k)]] == 1.0) {
        rank_sum_pos += midrank;
      }
    }
    i = j;
  }
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace metamdl
