#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "metamdl/error.hpp"

namespace metamdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One mini-batch from a single domain: rows are examples.  Labels are
/// binary masks flattened to the same width as the model output.
struct DomainBatch {
  Matrix inputs;  // n x d_in
  Matrix labels;  // n x d_out, entries in {0, 1}
  int domain_id = 0;

  Eigen::Index size() const { return inputs.rows(); }
};

/// Throws ShapeError unless the batch is internally consistent and labels
/// are strictly binary.
inline void validate_batch(const DomainBatch& b) {
  if (b.inputs.rows() != b.labels.rows()) {
    throw ShapeError("batch inputs/labels row mismatch: " +
                     std::to_string(b.inputs.rows()) + " vs " +
                     std::to_string(b.labels.rows()));
  }
  if (b.inputs.rows() == 0) throw ShapeError("empty batch");
  for (Eigen::Index i = 0; i < b.labels.size(); ++i) {
    const double y = b.labels.data()[i];
    if (y != 0.0 && y != 1.0) {
      throw ShapeError("labels must be binary, found " + std::to_string(y));
    }
  }
}

/// Row subset of a batch, in the order given by idx.
inline DomainBatch take_rows(const DomainBatch& b, const std::vector<int>& idx) {
  DomainBatch out;
  out.domain_id = b.domain_id;
  out.inputs.resize(static_cast<Eigen::Index>(idx.size()), b.inputs.cols());
  out.labels.resize(static_cast<Eigen::Index>(idx.size()), b.labels.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = b.inputs.row(idx[i]);
    out.labels.row(static_cast<Eigen::Index>(i)) = b.labels.row(idx[i]);
  }
  return out;
}

}  // namespace metamdl
