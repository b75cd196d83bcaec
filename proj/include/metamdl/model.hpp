#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "metamdl/data.hpp"
#include "metamdl/losses.hpp"

namespace metamdl {

enum class Activation { relu, tanh };

Activation activation_from_name(const std::string& name);  // throws ConfigError
std::string activation_name(Activation a);

/// Fully-connected network description.  hidden may be empty (a single
/// linear map).  sigmoid_output squashes the final layer to (0,1), which the
/// probabilistic losses require.
struct ModelSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Activation activation = Activation::tanh;
  bool sigmoid_output = true;
};

/// Flat, double-precision parameter vector.  Per-layer layout: the weight
/// matrix (output_dim x input_dim) in column-major order, then the bias.
struct ParamVector {
  Vector values;
};

/// Gradient with the same flat layout as ParamVector.
struct GradVector {
  Vector values;
};

/// Total number of scalar parameters implied by a ModelSpec.
Eigen::Index param_count(const ModelSpec& spec);

/// Throws ConfigError on degenerate specs (non-positive layer widths).
void validate_spec(const ModelSpec& spec);

/// Deterministic initialization: weights uniform in [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)) per layer, biases zero.  Same
/// (spec, seed) always yields the identical vector.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Forward pass over a batch; rows are examples.  Throws ShapeError on
/// input/parameter dimension mismatches.
Matrix forward(const ModelSpec& spec, const ParamVector& params,
               const Matrix& inputs);

/// Loss and exact reverse-mode gradient for one batch.  Pure: no hidden
/// state, identical inputs give bitwise-identical outputs.
struct LossGrad {
  double loss = 0.0;
  GradVector grad;
};
LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       const DomainBatch& batch, LossFn loss);

/// Plain gradient step params - eta * grad.  Throws ShapeError on length
/// mismatch, ConfigError on eta <= 0.
ParamVector sgd_step(const ParamVector& params, const GradVector& grad,
                     double eta);

/// Central-difference gradient of the model loss, coordinate by coordinate:
/// (L(theta + eps e_i) - L(theta - eps e_i)) / (2 eps).  Verification oracle;
/// shares only the forward pass with loss_and_grad, none of the backward
/// code.
GradVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params,
                            const DomainBatch& batch, LossFn loss,
                            double eps = 1e-5);

/// Save/load a ParamVector as a flat little-endian binary file:
/// 16-byte header (magic "MMPV", u32 version, u64 length) then the doubles.
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);  // throws IoError

}  // namespace metamdl
