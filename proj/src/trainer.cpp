#include "metamdl/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"

namespace metamdl {

namespace {

// Seed-stream tags so data generation, init, batching and splitting never
// share a random sequence.
constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kBatcherStream = 0x20;  // + domain index
constexpr std::uint64_t kSplitStream = 0x40;

void check_finite(double v, const char* what, int step) {
  if (!std::isfinite(v)) {
    throw DivergedError(std::string("non-finite ") + what, step);
  }
}

void check_finite_vec(const Vector& v, const char* what, int step) {
  if (!v.allFinite()) {
    throw DivergedError(std::string("non-finite ") + what, step);
  }
}

}  // namespace

double MlpObjective::value(const ParamVector& params,
                           const DomainBatch& batch) const {
  const Matrix out = forward(spec_, params, batch.inputs);
  return loss_value(loss_, make_pair(out, batch.labels));
}

LossGrad MlpObjective::value_and_grad(const ParamVector& params,
                                      const DomainBatch& batch) const {
  return loss_and_grad(spec_, params, batch, loss_);
}

MetaSplit split_minibatch(const DomainBatch& batch, double ratio,
                          std::uint64_t seed) {
  const int n = static_cast<int>(batch.size());
  if (n < 2) {
    throw ConfigError("cannot split a batch of fewer than 2 examples");
  }
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ConfigError("split ratio must lie in (0, 1)");
  }
  int n_train = static_cast<int>(std::llround(ratio * n));
  n_train = std::clamp(n_train, 1, n - 1);

  Rng rng(seed);
  const std::vector<int> perm = rng.permutation(n);
  std::vector<int> train_idx(perm.begin(), perm.begin() + n_train);
  std::vector<int> test_idx(perm.begin() + n_train, perm.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  return MetaSplit{take_rows(batch, train_idx), take_rows(batch, test_idx)};
}

ParamVector inner_step(const DomainObjective& objective,
                       const ParamVector& params, const MetaSplit& split,
                       double eta) {
  const LossGrad lg = objective.value_and_grad(params, split.meta_train);
  check_finite(lg.loss, "meta-train loss", -1);
  check_finite_vec(lg.grad.values, "meta-train gradient", -1);
  return sgd_step(params, lg.grad, eta);
}

double hypothetical_loss(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& hyp_params, std::span<const MetaSplit> splits) {
  if (objectives.size() != splits.size()) {
    throw ShapeError("objectives/splits count mismatch");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < objectives.size(); ++j) {
    const double v = objectives[j]->value(hyp_params, splits[j].meta_test);
    check_finite(v, "meta-test loss", -1);
    total += v;
  }
  return total;
}

ParamVector outer_step(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& params, std::span<const DomainBatch> batches,
    std::span<const double> weights, double eta,
    std::vector<double>* domain_losses) {
  const std::size_t k = objectives.size();
  if (batches.size() != k || weights.size() != k) {
    throw ShapeError("objectives/batches/weights count mismatch");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= -1e-12)) throw ConfigError("negative domain weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) {
    throw ConfigError("domain weights must sum to 1");
  }

  if (domain_losses) domain_losses->assign(k, 0.0);
  Vector combined = Vector::Zero(params.values.size());
  for (std::size_t j = 0; j < k; ++j) {
    const LossGrad lg = objectives[j]->value_and_grad(params, batches[j]);
    check_finite(lg.loss, "training loss", -1);
    check_finite_vec(lg.grad.values, "training gradient", -1);
    if (lg.grad.values.size() != combined.size()) {
      throw ShapeError("objective gradient length mismatch");
    }
    combined += weights[j] * lg.grad.values;
    if (domain_losses) (*domain_losses)[j] = lg.loss;
  }
  return sgd_step(params, GradVector{std::move(combined)}, eta);
}

void TrainConfig::validate(int num_domains) const {
  if (num_domains < 2) throw ConfigError("need at least 2 domains");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 (each batch is split)");
  }
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("split_ratio must lie in (0, 1)");
  }
  if (rule == UpdateRule::fixed || rule == UpdateRule::simple_g ||
      rule == UpdateRule::simple_c) {
    if (num_domains != 2) {
      throw ConfigError("fixed/simple rules are two-domain only");
    }
    if (use_dirichlet) {
      throw ConfigError("dirichlet backend needs a greedy/conservative rule");
    }
  }
  if (rule == UpdateRule::greedy || rule == UpdateRule::conservative) {
    if (!(prior_alpha > 1.0) || !(prior_beta > 1.0)) {
      throw ConfigError("prior alpha/beta must be > 1");
    }
    if (window < 1) throw ConfigError("window must be >= 1");
  }
  if (num_domains > 2 && !(rule == UpdateRule::greedy ||
                           rule == UpdateRule::conservative)) {
    throw ConfigError("K > 2 requires a greedy/conservative rule");
  }
}

namespace {

LambdaController make_controller(const TrainConfig& cfg, int k) {
  const bool map_rule = cfg.rule == UpdateRule::greedy ||
                        cfg.rule == UpdateRule::conservative;
  if (map_rule && (k > 2 || cfg.use_dirichlet)) {
    // Symmetric prior: reuse prior_alpha across all categories.
    std::vector<double> alphas(static_cast<std::size_t>(k), cfg.prior_alpha);
    if (k == 2) alphas[1] = cfg.prior_beta;
    return LambdaController(cfg.rule, std::move(alphas), cfg.window);
  }
  return LambdaController(cfg.rule, cfg.prior_alpha, cfg.prior_beta,
                          cfg.window, cfg.fixed_lambda, cfg.simple_init);
}

}  // namespace

TrainResult train_with_objectives(
    const TrainConfig& cfg,
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    std::span<Batcher> batchers, const ParamVector& init) {
  const int k = static_cast<int>(objectives.size());
  cfg.validate(k);
  if (static_cast<int>(batchers.size()) != k) {
    throw ShapeError("one batcher per domain required");
  }

  LambdaController controller = make_controller(cfg, k);
  const double inner = cfg.effective_inner_eta();
  const std::uint64_t split_base = mix_seed(cfg.seed, kSplitStream);

  TrainResult result;
  result.params = init;
  result.log.steps.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    try {
      std::vector<DomainBatch> full;
      full.reserve(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) full.push_back(batchers[j].next());

      std::vector<MetaSplit> splits;
      splits.reserve(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) {
        const std::uint64_t s = mix_seed(
            split_base, static_cast<std::uint64_t>(step) * k +
                            static_cast<std::uint64_t>(j));
        splits.push_back(split_minibatch(full[j], cfg.split_ratio, s));
      }

      StepLog entry;
      entry.hyp_losses.resize(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) {
        const ParamVector hyp = inner_step(*objectives[j], result.params,
                                           splits[j], inner);
        entry.hyp_losses[static_cast<std::size_t>(j)] =
            hypothetical_loss(objectives, hyp, splits);
      }

      const LambdaController::Decision decision =
          controller.step(entry.hyp_losses);
      entry.weights = decision.weights;
      entry.outcome = decision.outcome;

      result.params = outer_step(objectives, result.params, full,
                                 entry.weights, cfg.eta, &entry.domain_losses);
      result.log.steps.push_back(std::move(entry));
    } catch (const DivergedError&) {
      result.log.diverged = true;
      result.log.diverged_step = step;
      break;  // params still hold the last completed step
    }
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const ModelSpec& spec,
                  std::span<const LossFn> losses,
                  std::span<const Dataset> datasets) {
  const int k = static_cast<int>(datasets.size());
  cfg.validate(k);
  if (static_cast<int>(losses.size()) != k) {
    throw ShapeError("one loss per domain required");
  }
  std::vector<std::unique_ptr<DomainObjective>> objectives;
  objectives.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    objectives.push_back(std::make_unique<MlpObjective>(
        spec, losses[static_cast<std::size_t>(j)]));
  }
  std::vector<Batcher> batchers;
  batchers.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    batchers.emplace_back(
        datasets[static_cast<std::size_t>(j)], cfg.batch_size,
        mix_seed(cfg.seed, kBatcherStream + static_cast<std::uint64_t>(j)));
  }
  const ParamVector init = init_params(spec, mix_seed(cfg.seed, kInitStream));
  return train_with_objectives(cfg, objectives, batchers, init);
}

std::vector<TrajectoryRow> TrainLog::trajectory() const {
  std::vector<TrajectoryRow> rows;
  rows.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const StepLog& s = steps[i];
    rows.push_back(TrajectoryRow{static_cast<int>(i), s.weights, s.outcome,
                                 s.hyp_losses, s.domain_losses});
  }
  return rows;
}

TaylorProbe taylor_residual(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& params, std::span<const DomainBatch> batches,
    double eta) {
  if (objectives.size() != 2 || batches.size() != 2) {
    throw ConfigError("taylor_residual is a two-domain diagnostic");
  }
  const LossGrad a = objectives[0]->value_and_grad(params, batches[0]);
  const LossGrad b = objectives[1]->value_and_grad(params, batches[1]);
  check_finite_vec(a.grad.values, "gradient", -1);
  check_finite_vec(b.grad.values, "gradient", -1);

  const ParamVector theta_a = sgd_step(params, a.grad, eta);
  const ParamVector theta_b = sgd_step(params, b.grad, eta);

  const double h_a = objectives[0]->value(theta_a, batches[0]) +
                     objectives[1]->value(theta_a, batches[1]);
  const double h_b = objectives[0]->value(theta_b, batches[0]) +
                     objectives[1]->value(theta_b, batches[1]);

  TaylorProbe probe;
  probe.lhs = h_a - h_b;
  probe.rhs = eta * (b.grad.values.squaredNorm() - a.grad.values.squaredNorm());
  probe.residual = std::abs(probe.lhs - probe.rhs);
  return probe;
}

}  // namespace metamdl
