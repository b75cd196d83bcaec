#include "metamdl/lambda.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "metamdl/error.hpp"

namespace metamdl {

UpdateRule rule_from_name(const std::string& name) {
  if (name == "greedy") return UpdateRule::greedy;
  if (name == "conservative") return UpdateRule::conservative;
  if (name == "simple_g") return UpdateRule::simple_g;
  if (name == "simple_c") return UpdateRule::simple_c;
  if (name == "fixed") return UpdateRule::fixed;
  throw ConfigError("unknown update rule: " + name);
}

std::string rule_name(UpdateRule rule) {
  switch (rule) {
    case UpdateRule::greedy: return "greedy";
    case UpdateRule::conservative: return "conservative";
    case UpdateRule::simple_g: return "simple_g";
    case UpdateRule::simple_c: return "simple_c";
    case UpdateRule::fixed: return "fixed";
  }
  throw ConfigError("bad UpdateRule value");
}

LambdaState make_lambda_state(double alpha, double beta, int window) {
  if (!(alpha > 1.0) || !(beta > 1.0)) {
    throw ConfigError("beta prior requires alpha > 1 and beta > 1");
  }
  if (window < 1) throw ConfigError("window must be >= 1");
  LambdaState s;
  s.alpha = alpha;
  s.beta = beta;
  s.window = window;
  return s;
}

DirichletState make_dirichlet_state(std::vector<double> alphas, int window) {
  if (alphas.size() < 2) throw ConfigError("dirichlet needs >= 2 categories");
  for (double a : alphas) {
    if (!(a > 1.0)) throw ConfigError("dirichlet prior requires alphas > 1");
  }
  if (window < 1) throw ConfigError("window must be >= 1");
  DirichletState s;
  s.alphas = std::move(alphas);
  s.window = window;
  return s;
}

namespace {

bool is_map_rule(UpdateRule rule) {
  return rule == UpdateRule::greedy || rule == UpdateRule::conservative;
}

void check_finite_losses(std::span<const double> hyp) {
  for (double h : hyp) {
    if (!std::isfinite(h)) {
      throw DivergedError("non-finite hypothetical loss");
    }
  }
}

}  // namespace

int choose_outcome(UpdateRule rule, double hyp_a, double hyp_b) {
  if (!is_map_rule(rule)) {
    throw ConfigError("choose_outcome needs a greedy/conservative rule");
  }
  const double h[2] = {hyp_a, hyp_b};
  check_finite_losses(h);
  if (rule == UpdateRule::greedy) return hyp_b > hyp_a ? 1 : 0;
  return hyp_a > hyp_b ? 1 : 0;
}

int choose_outcome_k(UpdateRule rule, std::span<const double> hyp) {
  if (!is_map_rule(rule)) {
    throw ConfigError("choose_outcome_k needs a greedy/conservative rule");
  }
  if (hyp.size() < 2) throw ConfigError("need >= 2 hypothetical losses");
  check_finite_losses(hyp);
  std::size_t best = 0;
  for (std::size_t i = 1; i < hyp.size(); ++i) {
    // strict comparisons: ties keep the lowest index
    if (rule == UpdateRule::greedy ? hyp[i] < hyp[best] : hyp[i] > hyp[best]) {
      best = i;
    }
  }
  return static_cast<int>(best);
}

LambdaState record_outcome(LambdaState state, int outcome) {
  if (outcome != 0 && outcome != 1) {
    throw ConfigError("binary outcome must be 0 or 1");
  }
  state.history.push_back(outcome);
  while (static_cast<int>(state.history.size()) > state.window) {
    state.history.pop_front();
  }
  return state;
}

DirichletState record_outcome_k(DirichletState state, int outcome) {
  if (outcome < 0 || outcome >= static_cast<int>(state.alphas.size())) {
    throw ConfigError("outcome index out of range");
  }
  state.history.push_back(outcome);
  while (static_cast<int>(state.history.size()) > state.window) {
    state.history.pop_front();
  }
  return state;
}

double map_estimate_beta(const LambdaState& state) {
  const double n = static_cast<double>(state.history.size());
  const double ones = static_cast<double>(
      std::count(state.history.begin(), state.history.end(), 1));
  const double lam =
      (state.alpha + ones - 1.0) / (state.alpha + state.beta + n - 2.0);
  return std::clamp(lam, 0.0, 1.0);
}

std::vector<double> map_estimate_dirichlet(const DirichletState& state) {
  const std::size_t k = state.alphas.size();
  std::vector<double> counts(k, 0.0);
  for (int o : state.history) counts[static_cast<std::size_t>(o)] += 1.0;
  const double alpha_sum =
      std::accumulate(state.alphas.begin(), state.alphas.end(), 0.0);
  const double den = alpha_sum + static_cast<double>(state.history.size()) -
                     static_cast<double>(k);
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = (state.alphas[i] + counts[i] - 1.0) / den;
  }
  return w;
}

double simple_update(UpdateRule rule, double lam, double hyp_a, double hyp_b) {
  if (rule != UpdateRule::simple_g && rule != UpdateRule::simple_c) {
    throw ConfigError("simple_update needs a simple_g/simple_c rule");
  }
  const double h[2] = {hyp_a, hyp_b};
  check_finite_losses(h);
  if (hyp_a == 0.0) return lam;  // relative feedback undefined; skip
  const double gain = rule == UpdateRule::simple_g ? -0.1 : 0.1;
  return std::clamp(lam + gain * (hyp_a - hyp_b) / std::abs(hyp_a), 0.0, 1.0);
}

LambdaController::LambdaController(UpdateRule rule, double alpha, double beta,
                                   int window, double fixed_lambda,
                                   double simple_init)
    : rule_(rule), k_(2), use_dirichlet_(false), scalar_lambda_(0.5) {
  if (is_map_rule(rule)) {
    beta_state_ = make_lambda_state(alpha, beta, window);
  } else if (rule == UpdateRule::fixed) {
    if (!(fixed_lambda >= 0.0 && fixed_lambda <= 1.0)) {
      throw ConfigError("fixed lambda must lie in [0, 1]");
    }
    scalar_lambda_ = fixed_lambda;
  } else {
    if (!(simple_init >= 0.0 && simple_init <= 1.0)) {
      throw ConfigError("simple init lambda must lie in [0, 1]");
    }
    scalar_lambda_ = simple_init;
  }
}

LambdaController::LambdaController(UpdateRule rule, std::vector<double> alphas,
                                   int window)
    : rule_(rule),
      k_(static_cast<int>(alphas.size())),
      use_dirichlet_(true),
      scalar_lambda_(0.5) {
  if (!is_map_rule(rule)) {
    throw ConfigError("dirichlet controller needs a greedy/conservative rule");
  }
  dir_state_ = make_dirichlet_state(std::move(alphas), window);
}

LambdaController::Decision LambdaController::step(
    std::span<const double> hyp_losses) {
  if (static_cast<int>(hyp_losses.size()) != k_) {
    throw ShapeError("expected " + std::to_string(k_) +
                     " hypothetical losses, got " +
                     std::to_string(hyp_losses.size()));
  }
  check_finite_losses(hyp_losses);
  Decision d;
  if (use_dirichlet_) {
    d.outcome = choose_outcome_k(rule_, hyp_losses);
    dir_state_ = record_outcome_k(std::move(dir_state_), d.outcome);
    d.weights = map_estimate_dirichlet(dir_state_);
    return d;
  }
  switch (rule_) {
    case UpdateRule::greedy:
    case UpdateRule::conservative: {
      d.outcome = choose_outcome(rule_, hyp_losses[0], hyp_losses[1]);
      beta_state_ = record_outcome(std::move(beta_state_), d.outcome);
      const double lam = map_estimate_beta(beta_state_);
      d.weights = {lam, 1.0 - lam};
      return d;
    }
    case UpdateRule::simple_g:
    case UpdateRule::simple_c: {
      d.weights = {scalar_lambda_, 1.0 - scalar_lambda_};
      scalar_lambda_ =
          simple_update(rule_, scalar_lambda_, hyp_losses[0], hyp_losses[1]);
      return d;
    }
    case UpdateRule::fixed:
      d.weights = {scalar_lambda_, 1.0 - scalar_lambda_};
      return d;
  }
  throw ConfigError("bad UpdateRule value");
}

std::vector<double> LambdaController::current_weights() const {
  if (use_dirichlet_) return map_estimate_dirichlet(dir_state_);
  if (is_map_rule(rule_)) {
    const double lam = map_estimate_beta(beta_state_);
    return {lam, 1.0 - lam};
  }
  return {scalar_lambda_, 1.0 - scalar_lambda_};
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  const std::size_t k = rows.empty() ? 2 : rows.front().weights.size();
  out << "step,lambda";
  for (std::size_t i = 1; i < k; ++i) out << ",w" << i;
  out << ",outcome";
  for (std::size_t i = 0; i < k; ++i) out << ",hyp" << i;
  for (std::size_t i = 0; i < k; ++i) out << ",loss" << i;
  out << "\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& r : rows) {
    out << r.step;
    for (double w : r.weights) put(w);
    out << ',' << r.outcome;
    for (double h : r.hyp_losses) put(h);
    for (double l : r.domain_losses) put(l);
    out << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

}  // namespace metamdl
