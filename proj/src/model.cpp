#include "metamdl/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"

namespace metamdl {

static_assert(std::endian::native == std::endian::little,
              "parameter files assume a little-endian host");

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + name);
}

std::string activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

namespace {

std::vector<int> layer_dims(const ModelSpec& spec) {
  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  dims.push_back(spec.output_dim);
  return dims;
}

}  // namespace

void validate_spec(const ModelSpec& spec) {
  for (int d : layer_dims(spec)) {
    if (d <= 0) throw ConfigError("model layer widths must be positive");
  }
}

Eigen::Index param_count(const ModelSpec& spec) {
  validate_spec(spec);
  const auto dims = layer_dims(spec);
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    total += static_cast<Eigen::Index>(dims[l + 1]) * dims[l] + dims[l + 1];
  }
  return total;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  const auto dims = layer_dims(spec);
  ParamVector p;
  p.values = Vector::Zero(param_count(spec));
  Rng rng(seed);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index fan_in = dims[l];
    const Eigen::Index fan_out = dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < fan_out * fan_in; ++i) {
      p.values[off + i] = rng.uniform(-a, a);
    }
    off += fan_out * fan_in + fan_out;  // biases stay zero
  }
  return p;
}

namespace {

struct LayerMaps {
  Eigen::Map<const Matrix> W;
  Eigen::Map<const Vector> b;
};

// View of layer l's weights/bias inside the flat vector.
LayerMaps layer_view(const Vector& flat, const std::vector<int>& dims,
                     std::size_t l, Eigen::Index off) {
  const Eigen::Index rows = dims[l + 1], cols = dims[l];
  return {Eigen::Map<const Matrix>(flat.data() + off, rows, cols),
          Eigen::Map<const Vector>(flat.data() + off + rows * cols, rows)};
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
  const Eigen::Index want = param_count(spec);
  if (params.values.size() != want) {
    throw ShapeError("parameter vector length " +
                     std::to_string(params.values.size()) + ", model needs " +
                     std::to_string(want));
  }
}

void check_inputs(const ModelSpec& spec, const Matrix& inputs) {
  if (inputs.cols() != spec.input_dim) {
    throw ShapeError("input width " + std::to_string(inputs.cols()) +
                     ", model expects " + std::to_string(spec.input_dim));
  }
  if (inputs.rows() == 0) throw ShapeError("empty input batch");
}

// Forward pass keeping per-layer activations for backprop.  activations[0]
// is the input; activations[l+1] the post-activation output of layer l.
std::vector<Matrix> forward_trace(const ModelSpec& spec,
                                  const ParamVector& params,
                                  const Matrix& inputs) {
  const auto dims = layer_dims(spec);
  const std::size_t n_layers = dims.size() - 1;
  std::vector<Matrix> acts;
  acts.reserve(n_layers + 1);
  acts.push_back(inputs);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto [W, b] = layer_view(params.values, dims, l, off);
    off += W.size() + b.size();
    Matrix z = acts.back() * W.transpose();
    z.rowwise() += b.transpose();
    const bool last = (l + 1 == n_layers);
    if (last) {
      if (spec.sigmoid_output) {
        z = z.unaryExpr([](double v) { return sigmoid(v); });
      }
    } else if (spec.activation == Activation::relu) {
      z = z.cwiseMax(0.0);
    } else {
      z = z.array().tanh().matrix();
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

Matrix forward(const ModelSpec& spec, const ParamVector& params,
               const Matrix& inputs) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  return forward_trace(spec, params, inputs).back();
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                       const DomainBatch& batch, LossFn loss) {
  check_params(spec, params);
  check_inputs(spec, batch.inputs);
  validate_batch(batch);
  if (batch.labels.cols() != spec.output_dim) {
    throw ShapeError("label width " + std::to_string(batch.labels.cols()) +
                     ", model outputs " + std::to_string(spec.output_dim));
  }

  const auto dims = layer_dims(spec);
  const std::size_t n_layers = dims.size() - 1;
  const auto acts = forward_trace(spec, params, batch.inputs);
  const Matrix& out = acts.back();

  const PredTargetPair pt = make_pair(out, batch.labels);
  LossGrad result;
  result.loss = loss_value(loss, pt);
  const Vector dpred = loss_grad(loss, pt);

  // dL/d(pre-activation) of the output layer.
  Matrix delta = Eigen::Map<const Matrix>(dpred.data(), out.rows(), out.cols());
  if (spec.sigmoid_output) {
    delta.array() *= out.array() * (1.0 - out.array());
  }

  result.grad.values = Vector::Zero(params.values.size());
  // Per-layer flat offsets, for walking backward.
  std::vector<Eigen::Index> offsets(n_layers);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(dims[l + 1]) * dims[l] + dims[l + 1];
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::Index rows = dims[l + 1], cols = dims[l];
    Eigen::Map<Matrix> gW(result.grad.values.data() + offsets[l], rows, cols);
    Eigen::Map<Vector> gb(result.grad.values.data() + offsets[l] + rows * cols,
                          rows);
    gW = delta.transpose() * acts[l];
    gb = delta.colwise().sum().transpose();
    if (l == 0) break;
    const auto [W, b] = layer_view(params.values, dims, l, offsets[l]);
    (void)b;
    Matrix dprev = delta * W;
    // Chain through the hidden activation that produced acts[l].
    if (spec.activation == Activation::relu) {
      dprev.array() *= (acts[l].array() > 0.0).cast<double>();
    } else {
      dprev.array() *= 1.0 - acts[l].array().square();
    }
    delta = std::move(dprev);
  }
  return result;
}

ParamVector sgd_step(const ParamVector& params, const GradVector& grad,
                     double eta) {
  if (params.values.size() != grad.values.size()) {
    throw ShapeError("params/grad length mismatch");
  }
  if (!(eta > 0.0)) throw ConfigError("learning rate must be positive");
  return ParamVector{params.values - eta * grad.values};
}

GradVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params,
                            const DomainBatch& batch, LossFn loss,
                            double eps) {
  check_params(spec, params);
  GradVector g;
  g.values = Vector::Zero(params.values.size());
  ParamVector probe = params;
  for (Eigen::Index i = 0; i < params.values.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + eps;
    const Matrix out_hi = forward(spec, probe, batch.inputs);
    const double hi = loss_value(loss, make_pair(out_hi, batch.labels));
    probe.values[i] = saved - eps;
    const Matrix out_lo = forward(spec, probe, batch.inputs);
    const double lo = loss_value(loss, make_pair(out_lo, batch.labels));
    probe.values[i] = saved;
    g.values[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'P', 'V'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_params(const ParamVector& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const std::uint64_t len = static_cast<std::uint64_t>(params.values.size());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
  if (!out) throw IoError("short write: " + path);
}

ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a parameter file: " + path);
  }
  if (version != kVersion) {
    throw IoError("unsupported parameter file version in " + path);
  }
  ParamVector p;
  p.values = Vector::Zero(static_cast<Eigen::Index>(len));
  in.read(reinterpret_cast<char*>(p.values.data()),
          static_cast<std::streamsize>(len * sizeof(double)));
  if (!in || in.gcount() != static_cast<std::streamsize>(len * sizeof(double))) {
    throw IoError("truncated parameter file: " + path);
  }
  return p;
}

}  // namespace metamdl
