// Test-side reference implementations.  Everything here is deliberately
// independent of the library's production code paths: plain loops, no reuse
// of the code under test beyond calling pure evaluation primitives.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "metamdl/data.hpp"
#include "metamdl/model.hpp"
#include "metamdl/rng.hpp"
#include "metamdl/synth.hpp"

namespace testing_oracles {

using metamdl::DomainBatch;
using metamdl::LossFn;
using metamdl::Matrix;
using metamdl::ModelSpec;
using metamdl::ParamVector;
using metamdl::Vector;

/// Coordinate-wise central difference of an arbitrary scalar function.
inline Vector central_difference(const std::function<double(const Vector&)>& f,
                                 const Vector& x, double eps) {
  Vector g = Vector::Zero(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double hi = f(probe);
    probe[i] = saved - eps;
    const double lo = f(probe);
    probe[i] = saved;
    g[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

/// Per-coordinate relative error with an absolute floor, so near-zero
/// coordinates do not amplify finite-difference rounding noise.
inline double max_rel_err(const Vector& a, const Vector& b,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom =
        std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

/// A random small MLP + batch on which finite differences are trustworthy:
/// instances whose relu pre-activations sit too close to the kink are
/// redrawn (central differences straddle the kink there and measure the
/// two-sided average slope instead of the derivative).
struct GradCheckInstance {
  ModelSpec spec;
  ParamVector params;
  DomainBatch batch;
};

inline GradCheckInstance make_gradcheck_instance(std::uint64_t seed,
                                                 metamdl::Activation act) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    metamdl::Rng rng(metamdl::mix_seed(seed, 0x9100 + attempt));
    GradCheckInstance inst;
    inst.spec.input_dim = 2 + rng.index(4);
    const int depth = rng.index(3);  // 0..2 hidden layers
    for (int l = 0; l < depth; ++l) inst.spec.hidden.push_back(2 + rng.index(4));
    inst.spec.output_dim = 1 + rng.index(3);
    inst.spec.activation = act;
    inst.spec.sigmoid_output = true;

    inst.params =
        metamdl::init_params(inst.spec, metamdl::mix_seed(seed, 0x9200 + attempt));

    const int n = 2 + rng.index(5);
    inst.batch.inputs.resize(n, inst.spec.input_dim);
    inst.batch.labels.resize(n, inst.spec.output_dim);
    for (Eigen::Index i = 0; i < inst.batch.inputs.size(); ++i) {
      inst.batch.inputs.data()[i] = rng.normal();
    }
    bool any_pos = false;
    for (Eigen::Index i = 0; i < inst.batch.labels.size(); ++i) {
      const double y = rng.uniform() < 0.5 ? 0.0 : 1.0;
      inst.batch.labels.data()[i] = y;
      any_pos = any_pos || y == 1.0;
    }
    if (!any_pos) inst.batch.labels(0, 0) = 1.0;  // keep the overlap term alive

    if (act == metamdl::Activation::relu) {
      // Margin test: recompute every hidden pre-activation by hand.
      bool ok = true;
      Matrix a = inst.batch.inputs;
      Eigen::Index off = 0;
      std::vector<int> dims = {inst.spec.input_dim};
      dims.insert(dims.end(), inst.spec.hidden.begin(), inst.spec.hidden.end());
      dims.push_back(inst.spec.output_dim);
      for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const Eigen::Index rows = dims[l + 1], cols = dims[l];
        Eigen::Map<const Matrix> w(inst.params.values.data() + off, rows, cols);
        Eigen::Map<const Vector> b(inst.params.values.data() + off + rows * cols,
                                   rows);
        off += rows * cols + rows;
        Matrix z = a * w.transpose();
        z.rowwise() += b.transpose();
        if (l + 2 < dims.size()) {  // hidden layer: relu follows
          if (z.array().abs().minCoeff() < 1e-3) {
            ok = false;
            break;
          }
          a = z.cwiseMax(0.0);
        }
      }
      if (!ok) continue;
    }
    return inst;
  }
}

/// Plain weighted two-domain gradient descent: no splits, no hypothetical
/// steps, no controller -- just theta <- theta - eta (w L_a' + (1-w) L_b').
inline ParamVector weighted_sgd_reference(const ModelSpec& spec, LossFn loss_a,
                                          LossFn loss_b, ParamVector theta,
                                          double lam, double eta,
                                          metamdl::Batcher& ba,
                                          metamdl::Batcher& bb, int steps) {
  for (int t = 0; t < steps; ++t) {
    const DomainBatch batch_a = ba.next();
    const DomainBatch batch_b = bb.next();
    const metamdl::LossGrad ga = metamdl::loss_and_grad(spec, theta, batch_a, loss_a);
    const metamdl::LossGrad gb = metamdl::loss_and_grad(spec, theta, batch_b, loss_b);
    theta.values =
        theta.values - eta * (lam * ga.grad.values + (1.0 - lam) * gb.grad.values);
  }
  return theta;
}

}  // namespace testing_oracles
