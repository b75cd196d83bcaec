#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metamdl/trainer.hpp"

namespace metamdl {

/// Brute-force posterior mode of Beta(alpha, beta) after `ones` successes in
/// `total` trials: argmax over a uniform lambda grid of
/// (alpha + ones - 1) log(lam) + (beta + total - ones - 1) log(1 - lam).
/// Independent of the closed-form estimator; exists to check it.
double beta_mode_grid(double alpha, double beta, int total, int ones,
                      double step = 1e-5);

/// Same brute force for a 3-category Dirichlet-Multinomial posterior over
/// the probability simplex with the given grid step.
std::vector<double> dirichlet3_mode_grid(std::span<const double> alphas,
                                         std::span<const int> counts,
                                         double step = 1e-3);

/// Randomized closed-form-vs-grid comparison: draws `cases` full-window
/// configurations (alpha, beta in (1, 10], window length in [1, 200],
/// success count in [0, window]) and reports the worst absolute deviation.
struct MapCheckReport {
  int cases = 0;
  double max_abs_err = 0.0;
  double grid_step = 1e-5;
  double seconds = 0.0;
  double tolerance = 1e-4;
  bool pass = false;
};
MapCheckReport run_map_check(std::uint64_t seed, int cases = 500,
                             double tolerance = 1e-4, double step = 1e-5);

/// One randomly generated small two-domain problem for probing the
/// first-order analysis of the update choice.
struct TaylorInstance {
  ModelSpec spec;
  ParamVector params;
  std::vector<DomainBatch> batches;
  std::vector<std::unique_ptr<DomainObjective>> objectives;
};
TaylorInstance make_taylor_instance(std::uint64_t seed);

/// Residual |exact - surrogate| for one instance over a learning-rate
/// sweep, plus the shrink ratio between consecutive rates and whether the
/// surrogate predicts the sign of the exact difference at the smallest
/// rate.
struct TaylorSweep {
  std::vector<double> etas;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> residuals;
  std::vector<double> ratios;  // residual[i] / residual[i+1]
  bool sign_match_smallest = false;
};
TaylorSweep taylor_sweep(const TaylorInstance& instance,
                         std::span<const double> etas);

}  // namespace metamdl
