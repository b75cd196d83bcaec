#include "metamdl/checks.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"

namespace metamdl {

namespace {

// log-lambda lookup tables for a fixed grid, shared across many cases.
struct LogGrid {
  double step;
  int cells;  // grid points are i * step, i = 0..cells
  std::vector<double> log_x;      // log(i * step), index 0 unused (-inf)
  std::vector<double> log_1mx;    // log(1 - i * step)

  explicit LogGrid(double s) : step(s) {
    cells = static_cast<int>(std::llround(1.0 / s));
    log_x.resize(static_cast<std::size_t>(cells) + 1);
    log_1mx.resize(static_cast<std::size_t>(cells) + 1);
    for (int i = 0; i <= cells; ++i) {
      const double x = static_cast<double>(i) * s;
      log_x[static_cast<std::size_t>(i)] =
          i == 0 ? -std::numeric_limits<double>::infinity() : std::log(x);
      log_1mx[static_cast<std::size_t>(i)] =
          i == cells ? -std::numeric_limits<double>::infinity()
                     : std::log1p(-x);
    }
  }
};

double beta_mode_on_grid(const LogGrid& grid, double alpha, double beta,
                         int total, int ones) {
  const double ea = alpha + static_cast<double>(ones) - 1.0;
  const double eb = beta + static_cast<double>(total - ones) - 1.0;
  double best = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i <= grid.cells; ++i) {
    double score;
    // 0 * log(0) counts as 0 so zero exponents keep the endpoints feasible.
    if (i == 0) {
      score = ea == 0.0 ? eb * grid.log_1mx[0] : -std::numeric_limits<double>::infinity();
    } else if (i == grid.cells) {
      score = eb == 0.0 ? ea * grid.log_x[static_cast<std::size_t>(i)]
                        : -std::numeric_limits<double>::infinity();
    } else {
      score = ea * grid.log_x[static_cast<std::size_t>(i)] +
              eb * grid.log_1mx[static_cast<std::size_t>(i)];
    }
    if (score > best) {
      best = score;
      best_i = i;
    }
  }
  return static_cast<double>(best_i) * grid.step;
}

}  // namespace

double beta_mode_grid(double alpha, double beta, int total, int ones,
                      double step) {
  if (!(alpha > 1.0) || !(beta > 1.0)) {
    throw ConfigError("beta_mode_grid requires alpha, beta > 1");
  }
  if (total < 0 || ones < 0 || ones > total) {
    throw ConfigError("need 0 <= ones <= total");
  }
  const LogGrid grid(step);
  return beta_mode_on_grid(grid, alpha, beta, total, ones);
}

std::vector<double> dirichlet3_mode_grid(std::span<const double> alphas,
                                         std::span<const int> counts,
                                         double step) {
  if (alphas.size() != 3 || counts.size() != 3) {
    throw ConfigError("dirichlet3_mode_grid is 3-category only");
  }
  for (double a : alphas) {
    if (!(a > 1.0)) throw ConfigError("alphas must be > 1");
  }
  const int cells = static_cast<int>(std::llround(1.0 / step));
  std::vector<double> log_x(static_cast<std::size_t>(cells) + 1,
                            -std::numeric_limits<double>::infinity());
  for (int i = 1; i <= cells; ++i) {
    log_x[static_cast<std::size_t>(i)] = std::log(static_cast<double>(i) * step);
  }
  const double e0 = alphas[0] + counts[0] - 1.0;
  const double e1 = alphas[1] + counts[1] - 1.0;
  const double e2 = alphas[2] + counts[2] - 1.0;

  double best = -std::numeric_limits<double>::infinity();
  int bi = 1, bj = 1;
  // interior simplex points: w0 = i*step, w1 = j*step, w2 = 1 - w0 - w1,
  // with all three at least one grid step.
  for (int i = 1; i <= cells - 2; ++i) {
    const double si = e0 * log_x[static_cast<std::size_t>(i)];
    for (int j = 1; j <= cells - 1 - i; ++j) {
      const int k = cells - i - j;
      const double score = si + e1 * log_x[static_cast<std::size_t>(j)] +
                           e2 * log_x[static_cast<std::size_t>(k)];
      if (score > best) {
        best = score;
        bi = i;
        bj = j;
      }
    }
  }
  return {static_cast<double>(bi) * step, static_cast<double>(bj) * step,
          static_cast<double>(cells - bi - bj) * step};
}

MapCheckReport run_map_check(std::uint64_t seed, int cases, double tolerance,
                             double step) {
  const auto t0 = std::chrono::steady_clock::now();
  const LogGrid grid(step);
  Rng rng(seed);
  MapCheckReport report;
  report.cases = cases;
  report.grid_step = step;
  report.tolerance = tolerance;
  for (int c = 0; c < cases; ++c) {
    // alpha, beta uniform in (1, 10]: 1 + 9 * (1 - u) with u in [0, 1).
    const double alpha = 1.0 + 9.0 * (1.0 - rng.uniform());
    const double beta = 1.0 + 9.0 * (1.0 - rng.uniform());
    const int total = 1 + rng.index(200);    // window length in [1, 200]
    const int ones = rng.index(total + 1);   // successes in [0, total]

    LambdaState state = make_lambda_state(alpha, beta, total);
    for (int i = 0; i < total; ++i) {
      state = record_outcome(std::move(state), i < ones ? 1 : 0);
    }
    const double closed = map_estimate_beta(state);
    const double brute = beta_mode_on_grid(grid, alpha, beta, total, ones);
    report.max_abs_err = std::max(report.max_abs_err, std::abs(closed - brute));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report.pass = report.max_abs_err <= tolerance;
  return report;
}

TaylorInstance make_taylor_instance(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7a));
  TaylorInstance inst;
  inst.spec.input_dim = 4 + rng.index(5);
  inst.spec.hidden = {4 + rng.index(5)};
  inst.spec.output_dim = 2 + rng.index(3);
  inst.spec.activation = Activation::tanh;  // smooth, so the expansion holds
  inst.spec.sigmoid_output = true;

  inst.params = init_params(inst.spec, mix_seed(seed, 0x7b));

  const int n = 6;
  for (int d = 0; d < 2; ++d) {
    DomainBatch b;
    b.domain_id = d;
    b.inputs.resize(n, inst.spec.input_dim);
    b.labels.resize(n, inst.spec.output_dim);
    for (Eigen::Index i = 0; i < b.inputs.size(); ++i) {
      b.inputs.data()[i] = rng.normal();
    }
    for (Eigen::Index i = 0; i < b.labels.size(); ++i) {
      b.labels.data()[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    inst.batches.push_back(std::move(b));
    inst.objectives.push_back(
        std::make_unique<MlpObjective>(inst.spec, LossFn::bce_plus_dice));
  }
  return inst;
}

TaylorSweep taylor_sweep(const TaylorInstance& instance,
                         std::span<const double> etas) {
  TaylorSweep sweep;
  for (double eta : etas) {
    const TaylorProbe probe = taylor_residual(
        instance.objectives, instance.params, instance.batches, eta);
    sweep.etas.push_back(eta);
    sweep.lhs.push_back(probe.lhs);
    sweep.rhs.push_back(probe.rhs);
    sweep.residuals.push_back(probe.residual);
  }
  for (std::size_t i = 0; i + 1 < sweep.residuals.size(); ++i) {
    sweep.ratios.push_back(sweep.residuals[i] /
                           std::max(sweep.residuals[i + 1], 1e-300));
  }
  if (!sweep.lhs.empty()) {
    const double l = sweep.lhs.back();
    const double r = sweep.rhs.back();
    sweep.sign_match_smallest = (l > 0.0 && r > 0.0) || (l < 0.0 && r < 0.0);
  }
  return sweep;
}

}  // namespace metamdl
