#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <set>
#include <vector>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"
#include "metamdl/synth.hpp"
#include "metamdl/trainer.hpp"

#include "oracles.hpp"

using namespace metamdl;
using testing_oracles::weighted_sgd_reference;

namespace {

// L(theta) = 0.5 |theta|^2 regardless of the batch: gradient is theta.
class QuadraticObjective final : public DomainObjective {
 public:
  double value(const ParamVector& p, const DomainBatch&) const override {
    return 0.5 * p.values.squaredNorm();
  }
  LossGrad value_and_grad(const ParamVector& p, const DomainBatch&) const override {
    return LossGrad{0.5 * p.values.squaredNorm(), GradVector{p.values}};
  }
};

// Constant loss with a zero gradient.
class ConstantObjective final : public DomainObjective {
 public:
  explicit ConstantObjective(double c) : c_(c) {}
  double value(const ParamVector& p, const DomainBatch&) const override {
    (void)p;
    return c_;
  }
  LossGrad value_and_grad(const ParamVector& p, const DomainBatch&) const override {
    return LossGrad{c_, GradVector{Vector::Zero(p.values.size())}};
  }

 private:
  double c_;
};

// Fault injection: delegates to an inner objective but returns a NaN
// gradient on the n-th value_and_grad call.  Deliberately stateful; only
// used to verify that a blown-up step never leaks into the parameters.
class PoisonedObjective final : public DomainObjective {
 public:
  PoisonedObjective(std::unique_ptr<DomainObjective> inner, int poison_call)
      : inner_(std::move(inner)), poison_call_(poison_call) {}
  double value(const ParamVector& p, const DomainBatch& b) const override {
    return inner_->value(p, b);
  }
  LossGrad value_and_grad(const ParamVector& p, const DomainBatch& b) const override {
    ++calls_;
    LossGrad lg = inner_->value_and_grad(p, b);
    if (calls_ == poison_call_) {
      lg.grad.values[0] = std::numeric_limits<double>::quiet_NaN();
    }
    return lg;
  }

 private:
  std::unique_ptr<DomainObjective> inner_;
  int poison_call_;
  mutable int calls_ = 0;
};

DomainBatch dummy_batch(int rows, int cols) {
  DomainBatch b;
  b.inputs = Matrix::Zero(rows, cols);
  b.labels = Matrix::Zero(rows, cols);
  return b;
}

Dataset tiny_domain(int domain, double contrast, std::uint64_t mask_seed,
                    std::uint64_t render_seed, int count = 24) {
  DomainSpec spec;
  spec.grid = 8;
  spec.contrast = contrast;
  spec.noise_sigma = 0.5;
  spec.count = count;
  spec.mask_seed = mask_seed;
  spec.render_seed = render_seed;
  spec.domain_id = domain;
  return gen_domain(spec);
}

ModelSpec tiny_model() {
  ModelSpec s;
  s.input_dim = 64;
  s.output_dim = 64;
  s.sigmoid_output = true;
  return s;
}

TrainConfig base_config(UpdateRule rule, int steps, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.rule = rule;
  cfg.eta = 0.05;
  cfg.batch_size = 8;
  cfg.steps = steps;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("split_minibatch: disjoint halves covering the batch") {
  DomainBatch b;
  b.inputs.resize(8, 2);
  b.labels.resize(8, 2);
  for (int i = 0; i < 8; ++i) {
    b.inputs.row(i).setConstant(i);
    b.labels.row(i).setConstant(i % 2);
  }
  const MetaSplit split = split_minibatch(b, 0.5, 99);
  CHECK(split.meta_train.size() == 4);
  CHECK(split.meta_test.size() == 4);
  std::set<double> ids;
  for (Eigen::Index i = 0; i < 4; ++i) {
    ids.insert(split.meta_train.inputs(i, 0));
    ids.insert(split.meta_test.inputs(i, 0));
  }
  CHECK(ids.size() == 8);  // disjoint union of all rows

  const MetaSplit again = split_minibatch(b, 0.5, 99);
  CHECK(again.meta_train.inputs == split.meta_train.inputs);
  const MetaSplit other = split_minibatch(b, 0.5, 100);
  CHECK(other.meta_train.inputs != split.meta_train.inputs);
}

TEST_CASE("split_minibatch: clamping and validation") {
  DomainBatch two = dummy_batch(2, 3);
  const MetaSplit s = split_minibatch(two, 0.9, 1);  // clamped to 1 | 1
  CHECK(s.meta_train.size() == 1);
  CHECK(s.meta_test.size() == 1);
  DomainBatch one = dummy_batch(1, 3);
  CHECK_THROWS_AS(split_minibatch(one, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(split_minibatch(two, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_minibatch(two, 1.0, 1), ConfigError);
}

TEST_CASE("inner_step: quadratic objective contracts toward zero") {
  QuadraticObjective quad;
  ParamVector theta;
  theta.values.resize(1);
  theta.values << 2.0;
  MetaSplit split{dummy_batch(1, 1), dummy_batch(1, 1)};
  const ParamVector hyp = inner_step(quad, theta, split, 0.1);
  CHECK(hyp.values[0] == doctest::Approx(1.8).epsilon(1e-15));
  CHECK(theta.values[0] == 2.0);  // input untouched
}

TEST_CASE("inner_step equals the primitive composition on a real model") {
  const ModelSpec spec = tiny_model();
  const Dataset ds = tiny_domain(0, 1.5, 3, 4);
  const ParamVector theta = init_params(spec, 17);
  Batcher batcher(ds, 8, 21);
  const DomainBatch batch = batcher.next();
  const MetaSplit split = split_minibatch(batch, 0.5, 31);
  const MlpObjective obj(spec, LossFn::bce_plus_dice);
  const ParamVector a = inner_step(obj, theta, split, 0.01);
  const LossGrad lg = loss_and_grad(spec, theta, split.meta_train, LossFn::bce_plus_dice);
  const ParamVector b = sgd_step(theta, lg.grad, 0.01);
  CHECK(a.values == b.values);
}

TEST_CASE("hypothetical_loss totals the meta-test losses across domains") {
  std::vector<std::unique_ptr<DomainObjective>> objs;
  objs.push_back(std::make_unique<ConstantObjective>(0.7));
  objs.push_back(std::make_unique<ConstantObjective>(1.1));
  std::vector<MetaSplit> splits;
  splits.push_back({dummy_batch(1, 1), dummy_batch(1, 1)});
  splits.push_back({dummy_batch(1, 1), dummy_batch(1, 1)});
  ParamVector theta;
  theta.values = Vector::Zero(1);
  CHECK(hypothetical_loss(objs, theta, splits) == doctest::Approx(1.8).epsilon(1e-15));

  objs.push_back(std::make_unique<ConstantObjective>(0.2));
  CHECK_THROWS_AS(hypothetical_loss(objs, theta, splits), ShapeError);
  splits.push_back({dummy_batch(1, 1), dummy_batch(1, 1)});
  CHECK(hypothetical_loss(objs, theta, splits) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("outer_step: degenerate weights reduce to single-domain descent") {
  const ModelSpec spec = tiny_model();
  const Dataset da = tiny_domain(0, 1.5, 3, 4);
  const Dataset db = tiny_domain(1, 0.5, 3, 5);
  const ParamVector theta = init_params(spec, 2);
  std::vector<std::unique_ptr<DomainObjective>> objs;
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
  const std::vector<DomainBatch> batches = {da.as_batch(), db.as_batch()};

  std::vector<double> losses;
  const std::vector<double> pure_a = {1.0, 0.0};
  const ParamVector stepped =
      outer_step(objs, theta, batches, pure_a, 0.01, &losses);
  const LossGrad ga = loss_and_grad(spec, theta, batches[0], LossFn::bce_plus_dice);
  const ParamVector direct = sgd_step(theta, ga.grad, 0.01);
  CHECK(stepped.values == direct.values);
  REQUIRE(losses.size() == 2);
  CHECK(losses[0] == ga.loss);

  // equal weights over identical batches match an unweighted step
  const std::vector<DomainBatch> same = {da.as_batch(), da.as_batch()};
  std::vector<std::unique_ptr<DomainObjective>> same_objs;
  same_objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  same_objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  const std::vector<double> half = {0.5, 0.5};
  const ParamVector avg = outer_step(same_objs, theta, same, half, 0.01);
  const LossGrad g = loss_and_grad(spec, theta, same[0], LossFn::bce);
  const ParamVector plain = sgd_step(theta, g.grad, 0.01);
  CHECK((avg.values - plain.values).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("outer_step rejects non-simplex weights") {
  const ModelSpec spec = tiny_model();
  const Dataset da = tiny_domain(0, 1.5, 3, 4);
  const ParamVector theta = init_params(spec, 2);
  std::vector<std::unique_ptr<DomainObjective>> objs;
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  const std::vector<DomainBatch> batches = {da.as_batch(), da.as_batch()};
  std::vector<double> bad = {0.7, 0.7};
  CHECK_THROWS_AS(outer_step(objs, theta, batches, bad, 0.01), ConfigError);
  bad = {1.2, -0.2};
  CHECK_THROWS_AS(outer_step(objs, theta, batches, bad, 0.01), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg = base_config(UpdateRule::conservative, 10, 1);
  CHECK_NOTHROW(cfg.validate(2));
  CHECK_NOTHROW(cfg.validate(4));
  cfg.rule = UpdateRule::fixed;
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);  // fixed is two-domain only
  cfg = base_config(UpdateRule::simple_g, 10, 1);
  CHECK_THROWS_AS(cfg.validate(3), ConfigError);
  cfg = base_config(UpdateRule::conservative, 10, 1);
  cfg.batch_size = 1;  // cannot split
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = base_config(UpdateRule::conservative, 10, 1);
  cfg.prior_alpha = 1.0;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = base_config(UpdateRule::conservative, 0, 1);
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = base_config(UpdateRule::conservative, 10, 1);
  cfg.split_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
  cfg = base_config(UpdateRule::simple_c, 10, 1);
  cfg.use_dirichlet = true;
  CHECK_THROWS_AS(cfg.validate(2), ConfigError);
}

TEST_CASE("fixed-rule training equals plain weighted gradient descent") {
  const ModelSpec spec = tiny_model();
  const Dataset da = tiny_domain(0, 1.8, 31, 32);
  const Dataset db = tiny_domain(1, 0.6, 31, 33);
  TrainConfig cfg = base_config(UpdateRule::fixed, 40, 12345);
  cfg.fixed_lambda = 0.3;
  cfg.eta = 0.02;

  std::vector<std::unique_ptr<DomainObjective>> objs;
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  std::vector<Batcher> batchers;
  batchers.emplace_back(da, cfg.batch_size, 111);
  batchers.emplace_back(db, cfg.batch_size, 222);
  const ParamVector init = init_params(spec, 7);
  const TrainResult result = train_with_objectives(cfg, objs, batchers, init);
  REQUIRE_FALSE(result.log.diverged);
  REQUIRE(result.log.steps.size() == 40);

  // identical batch streams, zero inner-loop machinery
  Batcher ref_a(da, cfg.batch_size, 111);
  Batcher ref_b(db, cfg.batch_size, 222);
  const ParamVector oracle = weighted_sgd_reference(
      spec, LossFn::bce_plus_dice, LossFn::bce, init, 0.3, cfg.eta, ref_a,
      ref_b, 40);
  CHECK((result.params.values - oracle.values).cwiseAbs().maxCoeff() <= 1e-10);

  // the fixed run still logs the hypothetical losses it computed
  for (const StepLog& s : result.log.steps) {
    CHECK(s.weights[0] == 0.3);
    CHECK(s.outcome == -1);
    REQUIRE(s.hyp_losses.size() == 2);
    CHECK(std::isfinite(s.hyp_losses[0]));
    CHECK(std::isfinite(s.hyp_losses[1]));
  }
}

TEST_CASE("training is deterministic in the config seed") {
  const ModelSpec spec = tiny_model();
  const std::vector<Dataset> data = {tiny_domain(0, 1.8, 41, 42),
                                     tiny_domain(1, 0.6, 41, 43)};
  const std::vector<LossFn> losses = {LossFn::bce_plus_dice, LossFn::bce_plus_dice};
  const TrainConfig cfg = base_config(UpdateRule::conservative, 50, 999);
  const TrainResult a = train(cfg, spec, losses, data);
  const TrainResult b = train(cfg, spec, losses, data);
  CHECK(a.params.values == b.params.values);
  REQUIRE(a.log.steps.size() == b.log.steps.size());
  for (std::size_t i = 0; i < a.log.steps.size(); ++i) {
    CHECK(a.log.steps[i].weights == b.log.steps[i].weights);
    CHECK(a.log.steps[i].outcome == b.log.steps[i].outcome);
    CHECK(a.log.steps[i].hyp_losses == b.log.steps[i].hyp_losses);
  }
  TrainConfig other = cfg;
  other.seed = 1000;
  const TrainResult c = train(other, spec, losses, data);
  CHECK(a.params.values != c.params.values);
}

TEST_CASE("a blown-up step never leaks into the returned parameters") {
  const ModelSpec spec = tiny_model();
  const Dataset da = tiny_domain(0, 1.8, 51, 52);
  const Dataset db = tiny_domain(1, 0.6, 51, 53);
  const ParamVector init = init_params(spec, 70);
  TrainConfig cfg = base_config(UpdateRule::conservative, 10, 424242);

  // Call pattern per domain per step: 1 gradient call for the inner step,
  // 1 for the outer update.  Poisoning call 2s+2 on domain 0 detonates the
  // outer update of step s; call 2s+1 the inner step.
  for (const int poison_call : {14, 13}) {  // outer and inner of step 6
    std::vector<std::unique_ptr<DomainObjective>> objs;
    objs.push_back(std::make_unique<PoisonedObjective>(
        std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice), poison_call));
    objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
    std::vector<Batcher> batchers;
    batchers.emplace_back(da, cfg.batch_size, 611);
    batchers.emplace_back(db, cfg.batch_size, 622);
    const TrainResult poisoned = train_with_objectives(cfg, objs, batchers, init);
    CHECK(poisoned.log.diverged);
    CHECK(poisoned.log.diverged_step == 6);
    CHECK(poisoned.log.steps.size() == 6);  // steps 0..5 completed

    // a clean run stopped after 6 steps must land on identical parameters
    std::vector<std::unique_ptr<DomainObjective>> clean;
    clean.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
    clean.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
    std::vector<Batcher> clean_batchers;
    clean_batchers.emplace_back(da, cfg.batch_size, 611);
    clean_batchers.emplace_back(db, cfg.batch_size, 622);
    TrainConfig short_cfg = cfg;
    short_cfg.steps = 6;
    const TrainResult reference =
        train_with_objectives(short_cfg, clean, clean_batchers, init);
    CHECK(poisoned.params.values == reference.params.values);
    CHECK(poisoned.params.values.allFinite());
  }
}

TEST_CASE("beta and dirichlet backends agree at K=2") {
  const ModelSpec spec = tiny_model();
  const std::vector<Dataset> data = {tiny_domain(0, 1.8, 61, 62),
                                     tiny_domain(1, 0.6, 61, 63)};
  const std::vector<LossFn> losses = {LossFn::bce_plus_dice, LossFn::bce_plus_dice};
  TrainConfig cfg = base_config(UpdateRule::greedy, 100, 31337);
  const TrainResult beta_run = train(cfg, spec, losses, data);
  cfg.use_dirichlet = true;
  const TrainResult dir_run = train(cfg, spec, losses, data);
  REQUIRE_FALSE(beta_run.log.diverged);
  REQUIRE_FALSE(dir_run.log.diverged);
  REQUIRE(beta_run.log.steps.size() == dir_run.log.steps.size());
  for (std::size_t i = 0; i < beta_run.log.steps.size(); ++i) {
    const auto& sb = beta_run.log.steps[i];
    const auto& sd = dir_run.log.steps[i];
    CHECK(std::abs(sb.weights[0] - sd.weights[0]) <= 1e-12);
    // binary outcome 1 (domain A) corresponds to category index 0
    CHECK(sb.outcome == (sd.outcome == 0 ? 1 : 0));
  }
  CHECK((beta_run.params.values - dir_run.params.values).cwiseAbs().maxCoeff() <=
        1e-9);
}

TEST_CASE("three-domain training produces valid simplex weights") {
  ModelSpec spec = tiny_model();
  const std::vector<Dataset> data = {tiny_domain(0, 1.8, 71, 72),
                                     tiny_domain(1, 1.0, 71, 73),
                                     tiny_domain(2, 0.5, 71, 74)};
  const std::vector<LossFn> losses(3, LossFn::bce_plus_dice);
  TrainConfig cfg = base_config(UpdateRule::greedy, 50, 2718);
  cfg.prior_alpha = 3.0;
  const TrainResult result = train(cfg, spec, losses, data);
  REQUIRE_FALSE(result.log.diverged);
  REQUIRE(result.log.steps.size() == 50);
  bool saw_every_domain[3] = {false, false, false};
  for (const StepLog& s : result.log.steps) {
    REQUIRE(s.weights.size() == 3);
    double sum = 0.0;
    for (double w : s.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(s.outcome >= 0);
    REQUIRE(s.outcome < 3);
    saw_every_domain[s.outcome] = true;
  }
  CHECK(result.params.values.allFinite());
  (void)saw_every_domain;
}

TEST_CASE("symmetric domains keep the conservative estimate near 1/2") {
  const ModelSpec spec = tiny_model();
  // same contrast/noise and paired masks; only the rendering stream differs
  const std::vector<Dataset> data = {tiny_domain(0, 1.2, 81, 82),
                                     tiny_domain(1, 1.2, 81, 83)};
  const std::vector<LossFn> losses = {LossFn::bce_plus_dice, LossFn::bce_plus_dice};
  const TrainConfig cfg = base_config(UpdateRule::conservative, 300, 1555);
  const TrainResult result = train(cfg, spec, losses, data);
  REQUIRE_FALSE(result.log.diverged);
  double mean = 0.0;
  for (const StepLog& s : result.log.steps) {
    CHECK(s.weights[0] >= 0.0);
    CHECK(s.weights[0] <= 1.0);
    mean += s.weights[0];
  }
  mean /= static_cast<double>(result.log.steps.size());
  CHECK(mean > 0.3);
  CHECK(mean < 0.7);
}

TEST_CASE("adaptive rules move lambda off its starting point") {
  const ModelSpec spec = tiny_model();
  const std::vector<Dataset> data = {tiny_domain(0, 2.5, 91, 92),
                                     tiny_domain(1, 0.3, 91, 93)};
  const std::vector<LossFn> losses = {LossFn::bce_plus_dice, LossFn::bce_plus_dice};
  for (const UpdateRule rule : {UpdateRule::greedy, UpdateRule::conservative}) {
    const TrainResult result = train(base_config(rule, 200, 46), spec, losses, data);
    REQUIRE_FALSE(result.log.diverged);
    double mn = 1.0, mx = 0.0;
    for (const StepLog& s : result.log.steps) {
      mn = std::min(mn, s.weights[0]);
      mx = std::max(mx, s.weights[0]);
    }
    CHECK(mx - mn > 0.0);  // the trajectory actually moves
  }
}

TEST_CASE("taylor probe: identical domains cancel exactly") {
  const ModelSpec spec = tiny_model();
  const Dataset ds = tiny_domain(0, 1.5, 95, 96);
  std::vector<std::unique_ptr<DomainObjective>> objs;
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce_plus_dice));
  const std::vector<DomainBatch> batches = {ds.as_batch(), ds.as_batch()};
  const ParamVector theta = init_params(spec, 5);
  const TaylorProbe probe = taylor_residual(objs, theta, batches, 0.01);
  CHECK(probe.lhs == 0.0);
  CHECK(probe.rhs == 0.0);
  CHECK(probe.residual == 0.0);

  objs.push_back(std::make_unique<MlpObjective>(spec, LossFn::bce));
  CHECK_THROWS_AS(taylor_residual(objs, theta, batches, 0.01), ConfigError);
}
