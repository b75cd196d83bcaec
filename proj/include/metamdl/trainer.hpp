#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "metamdl/data.hpp"
#include "metamdl/lambda.hpp"
#include "metamdl/model.hpp"
#include "metamdl/synth.hpp"

namespace metamdl {

/// Anything with a differentiable per-domain loss.  Implementations must be
/// pure: same (params, batch) always gives the same value/gradient.
class DomainObjective {
 public:
  virtual ~DomainObjective() = default;
  virtual double value(const ParamVector& params,
                       const DomainBatch& batch) const = 0;
  virtual LossGrad value_and_grad(const ParamVector& params,
                                  const DomainBatch& batch) const = 0;
};

/// The standard case: an MLP spec plus a loss function.
class MlpObjective final : public DomainObjective {
 public:
  MlpObjective(ModelSpec spec, LossFn loss) : spec_(std::move(spec)), loss_(loss) {}
  double value(const ParamVector& params, const DomainBatch& batch) const override;
  LossGrad value_and_grad(const ParamVector& params,
                          const DomainBatch& batch) const override;
  const ModelSpec& spec() const { return spec_; }
  LossFn loss() const { return loss_; }

 private:
  ModelSpec spec_;
  LossFn loss_;
};

/// A mini-batch split into disjoint meta-train / meta-test halves.
struct MetaSplit {
  DomainBatch meta_train;
  DomainBatch meta_test;
};

/// Random disjoint split with round(ratio * n) meta-train rows, clamped so
/// both sides are non-empty.  Throws ConfigError when the batch has fewer
/// than 2 rows.  Deterministic in (batch order, seed).
MetaSplit split_minibatch(const DomainBatch& batch, double ratio,
                          std::uint64_t seed);

/// One hypothetical gradient step on the meta-train half of domain k:
/// theta_k = theta - eta * grad L_k(meta-train_k).  Throws DivergedError on
/// non-finite values.
ParamVector inner_step(const DomainObjective& objective,
                       const ParamVector& params, const MetaSplit& split,
                       double eta);

/// Total held-out loss of hypothetical parameters across every domain's
/// meta-test half: H = sum_j L_j(meta-test_j; hyp_params).
double hypothetical_loss(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& hyp_params, std::span<const MetaSplit> splits);

/// Per-domain hypothetical losses for one step.
struct HypotheticalResult {
  std::vector<double> hyp;           // H_k, one per domain
  std::vector<ParamVector> hyp_params;
};

/// The actual parameter update with convex weights: theta' = theta -
/// eta * sum_k w_k grad L_k(full batch k).  Validates that weights form a
/// simplex.  domain_losses (optional out) receives L_k at theta.
ParamVector outer_step(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& params, std::span<const DomainBatch> batches,
    std::span<const double> weights, double eta,
    std::vector<double>* domain_losses = nullptr);

/// Full training configuration.
struct TrainConfig {
  UpdateRule rule = UpdateRule::conservative;
  double fixed_lambda = 0.5;   // fixed rule only: weight on domain 0
  double simple_init = 0.5;    // simple rules: starting lambda
  double prior_alpha = 5.0;
  double prior_beta = 5.0;
  int window = 25;
  bool use_dirichlet = false;  // force the K-domain backend at K = 2
  double eta = 0.01;
  double inner_eta = -1.0;     // hypothetical-step rate; < 0 means "use eta"
  double split_ratio = 0.5;
  int batch_size = 8;
  int steps = 100;
  std::uint64_t seed = 0;

  double effective_inner_eta() const { return inner_eta > 0.0 ? inner_eta : eta; }
  void validate(int num_domains) const;  // throws ConfigError
};

/// Per-step record of what the trainer did.
struct StepLog {
  std::vector<double> weights;        // applied at this step; weights[0] = lambda
  int outcome = -1;                   // recorded MAP outcome, -1 otherwise
  std::vector<double> hyp_losses;     // H_k
  std::vector<double> domain_losses;  // L_k(full batch; theta before update)
};

struct TrainLog {
  std::vector<StepLog> steps;
  bool diverged = false;
  int diverged_step = -1;

  std::vector<TrajectoryRow> trajectory() const;
};

struct TrainResult {
  ParamVector params;  // after the last *completed* step
  TrainLog log;
};

/// Train one shared model on K domains.  Each step: draw one full batch per
/// domain, split each, take the K hypothetical inner steps, score the
/// hypothetical losses, ask the weighting rule for this step's simplex
/// weights, then apply the weighted outer update.  A non-finite loss or
/// gradient anywhere in the step aborts training: the result keeps the
/// parameters from the last completed step and the log records where it
/// blew up; nothing from the aborted step leaks into the parameters.
TrainResult train_with_objectives(
    const TrainConfig& cfg,
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    std::span<Batcher> batchers, const ParamVector& init);

/// Dataset-level convenience wrapper: builds MLP objectives, batchers and
/// the initial parameter vector from cfg.seed-derived streams.
TrainResult train(const TrainConfig& cfg, const ModelSpec& spec,
                  std::span<const LossFn> losses,
                  std::span<const Dataset> datasets);

/// Diagnostic for the first-order analysis of the two-domain update choice:
/// evaluates lhs = H_a - H_b exactly and its Taylor surrogate
/// rhs = eta * (|grad L_b|^2 - |grad L_a|^2) on the given full batches
/// (meta-train = meta-test = full batch), returning both and the residual.
struct TaylorProbe {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // |lhs - rhs|
};
TaylorProbe taylor_residual(
    std::span<const std::unique_ptr<DomainObjective>> objectives,
    const ParamVector& params, std::span<const DomainBatch> batches,
    double eta);

}  // namespace metamdl
