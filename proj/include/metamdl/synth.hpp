#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metamdl/data.hpp"

namespace metamdl {

/// Parameters for one synthetic segmentation domain.  Samples are g x g
/// images, flattened row-major to g*g features: standard-normal background
/// plus `contrast` added on a random blob mask plus N(0, noise_sigma^2)
/// pixel noise.  Two domains built with the same mask_seed share identical
/// masks (paired anatomy); render_seed controls everything else.
struct DomainSpec {
  int grid = 16;
  double contrast = 1.0;
  double noise_sigma = 0.5;
  int count = 64;
  std::uint64_t mask_seed = 0;
  std::uint64_t render_seed = 0;
  int domain_id = 0;
};

/// A full labeled dataset for one domain; rows are examples.
struct Dataset {
  Matrix inputs;  // count x grid^2
  Matrix labels;  // count x grid^2, binary masks
  int domain_id = 0;

  Eigen::Index size() const { return inputs.rows(); }
  DomainBatch as_batch() const { return DomainBatch{inputs, labels, domain_id}; }
};

/// Deterministically generate a dataset.  Throws ConfigError on degenerate
/// specs (grid < 2, count < 1, negative contrast or noise).
Dataset gen_domain(const DomainSpec& spec);

/// Keep round(fraction * size) examples chosen uniformly without
/// replacement (ascending original order).  fraction == 1 returns the
/// dataset unchanged; a selection of zero examples throws ConfigError.
Dataset downsample(const Dataset& ds, double fraction, std::uint64_t seed);

/// Deterministic epoch-shuffled mini-batch stream: every example appears
/// exactly once per epoch (last batch may be short), each epoch reshuffled
/// with a seed derived from (seed, epoch).
class Batcher {
 public:
  Batcher(Dataset ds, int batch_size, std::uint64_t seed);
  DomainBatch next();
  int batch_size() const { return batch_size_; }
  Eigen::Index dataset_size() const { return ds_.size(); }

 private:
  void reshuffle();
  Dataset ds_;
  int batch_size_;
  std::uint64_t seed_;
  int epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<int> order_;
};

/// Save/load a dataset as a flat little-endian binary tensor file: 16-byte
/// header (magic "MMDS", u32 version, u64 payload doubles), then u64
/// domain_id/rows/cols and the two column-major double blocks.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);  // throws IoError

}  // namespace metamdl
