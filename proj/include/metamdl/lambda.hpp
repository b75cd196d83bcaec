#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

namespace metamdl {

/// Domain-weighting policies.  greedy favors the domain whose hypothetical
/// update helps the *other* domain less (chases the larger gradient);
/// conservative is its mirror.  simple_g / simple_c are the relative
/// proportional-feedback baselines with gain -0.1 / +0.1; fixed holds a
/// constant weight.
enum class UpdateRule { greedy, conservative, simple_g, simple_c, fixed };

UpdateRule rule_from_name(const std::string& name);  // throws ConfigError
std::string rule_name(UpdateRule rule);

/// Beta-Bernoulli posterior state over a sliding window of binary outcomes.
/// Invariants: alpha > 1, beta > 1, window >= 1, history.size() <= window.
struct LambdaState {
  double alpha = 5.0;
  double beta = 5.0;
  int window = 25;
  std::deque<int> history;  // newest at the back, entries in {0, 1}
};

LambdaState make_lambda_state(double alpha, double beta, int window);

/// Dirichlet-Multinomial generalization: outcomes are domain indices
/// 0..K-1.  Invariants: all alphas > 1, window >= 1.
struct DirichletState {
  std::vector<double> alphas;
  int window = 25;
  std::deque<int> history;
};

DirichletState make_dirichlet_state(std::vector<double> alphas, int window);

/// Binary outcome for two domains from hypothetical losses: greedy picks 1
/// iff H_b > H_a, conservative picks 1 iff H_a > H_b; ties give 0.  Throws
/// DivergedError on non-finite losses, ConfigError for non-MAP rules.
int choose_outcome(UpdateRule rule, double hyp_a, double hyp_b);

/// K-domain outcome: greedy = argmin H, conservative = argmax H; ties break
/// to the lowest index.
int choose_outcome_k(UpdateRule rule, std::span<const double> hyp);

/// Append an outcome, evicting the oldest entry once the window is full.
LambdaState record_outcome(LambdaState state, int outcome);
DirichletState record_outcome_k(DirichletState state, int outcome);

/// Windowed MAP point estimate (posterior mode).  With n recorded outcomes
/// of which N are ones: (alpha + N - 1) / (alpha + beta + n - 2), clamped to
/// [0, 1].  Empty history gives the prior mode; for alpha = beta it is
/// exactly 0.5.
double map_estimate_beta(const LambdaState& state);

/// K-dimensional posterior mode: w_k = (alpha_k + N_k - 1) /
/// (sum(alpha) + n - K).  Sums to 1.
std::vector<double> map_estimate_dirichlet(const DirichletState& state);

/// One proportional-feedback update: lam + gain * (H_a - H_b) / |H_a|,
/// clamped to [0, 1]; H_a == 0 leaves lam unchanged.  gain is -0.1 for
/// simple_g, +0.1 for simple_c.
double simple_update(UpdateRule rule, double lam, double hyp_a, double hyp_b);

/// Stateful per-step weighting engine used by the trainer.  step() consumes
/// this step's hypothetical losses and returns the simplex weights to apply
/// to this step's combined gradient:
///   - greedy/conservative: records the outcome, then returns the updated
///     windowed MAP estimate (the newest outcome counts immediately);
///   - simple_g/simple_c: returns the current lambda, then folds the losses
///     into the next one;
///   - fixed: constant weights throughout.
class LambdaController {
 public:
  struct Decision {
    std::vector<double> weights;  // size K, sums to 1, weights[0] = lambda
    int outcome = -1;             // recorded outcome; -1 for simple/fixed
  };

  /// Two-domain Beta-Bernoulli controller (MAP rules) or scalar controller
  /// (simple/fixed).  fixed_lambda is the weight on domain 0.
  LambdaController(UpdateRule rule, double alpha, double beta, int window,
                   double fixed_lambda = 0.5, double simple_init = 0.5);

  /// K-domain Dirichlet controller; rule must be greedy or conservative.
  LambdaController(UpdateRule rule, std::vector<double> alphas, int window);

  Decision step(std::span<const double> hyp_losses);

  /// Weights the next step would use if no further outcome were recorded.
  std::vector<double> current_weights() const;

  UpdateRule rule() const { return rule_; }
  int num_domains() const { return k_; }

 private:
  UpdateRule rule_;
  int k_;
  bool use_dirichlet_;
  LambdaState beta_state_;
  DirichletState dir_state_;
  double scalar_lambda_;  // simple/fixed rules
};

/// Write a per-step trajectory CSV: step, lambda (or all K weights),
/// recorded outcome, hypothetical losses, per-domain training losses.
/// Values are printed with enough digits to round-trip doubles exactly.
struct TrajectoryRow {
  int step = 0;
  std::vector<double> weights;
  int outcome = -1;
  std::vector<double> hyp_losses;
  std::vector<double> domain_losses;
};

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRow>& rows);

}  // namespace metamdl
