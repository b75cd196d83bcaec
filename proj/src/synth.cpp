#include "metamdl/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "metamdl/error.hpp"
#include "metamdl/rng.hpp"

namespace metamdl {

namespace {

void check_spec(const DomainSpec& spec) {
  if (spec.grid < 2) throw ConfigError("grid must be >= 2");
  if (spec.count < 1) throw ConfigError("count must be >= 1");
  if (spec.contrast < 0.0) throw ConfigError("contrast must be >= 0");
  if (spec.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
}

// Union of 1-3 random axis-aligned ellipses on the g x g grid.
Vector blob_mask(int g, Rng& rng) {
  const int n_blobs = 1 + rng.index(3);
  struct Ellipse { double cx, cy, rx, ry; };
  std::vector<Ellipse> blobs;
  blobs.reserve(static_cast<std::size_t>(n_blobs));
  const double gd = static_cast<double>(g);
  for (int b = 0; b < n_blobs; ++b) {
    Ellipse e;
    e.cx = rng.uniform(0.15 * gd, 0.85 * gd);
    e.cy = rng.uniform(0.15 * gd, 0.85 * gd);
    e.rx = rng.uniform(0.08 * gd, 0.28 * gd);
    e.ry = rng.uniform(0.08 * gd, 0.28 * gd);
    blobs.push_back(e);
  }
  Vector mask = Vector::Zero(static_cast<Eigen::Index>(g) * g);
  for (int row = 0; row < g; ++row) {
    for (int col = 0; col < g; ++col) {
      const double x = static_cast<double>(col) + 0.5;
      const double y = static_cast<double>(row) + 0.5;
      for (const auto& e : blobs) {
        const double dx = (x - e.cx) / e.rx;
        const double dy = (y - e.cy) / e.ry;
        if (dx * dx + dy * dy <= 1.0) {
          mask[static_cast<Eigen::Index>(row) * g + col] = 1.0;
          break;
        }
      }
    }
  }
  return mask;
}

}  // namespace

Dataset gen_domain(const DomainSpec& spec) {
  check_spec(spec);
  const Eigen::Index d = static_cast<Eigen::Index>(spec.grid) * spec.grid;
  Dataset ds;
  ds.domain_id = spec.domain_id;
  ds.inputs.resize(spec.count, d);
  ds.labels.resize(spec.count, d);
  for (int i = 0; i < spec.count; ++i) {
    Rng mask_rng(mix_seed(spec.mask_seed, static_cast<std::uint64_t>(i)));
    Rng render_rng(mix_seed(spec.render_seed, static_cast<std::uint64_t>(i)));
    const Vector mask = blob_mask(spec.grid, mask_rng);
    for (Eigen::Index p = 0; p < d; ++p) {
      const double background = render_rng.normal();
      const double noise = spec.noise_sigma * render_rng.normal();
      ds.inputs(i, p) = background + spec.contrast * mask[p] + noise;
      ds.labels(i, p) = mask[p];
    }
  }
  return ds;
}

Dataset downsample(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("downsample fraction must lie in (0, 1]");
  }
  const Eigen::Index n = ds.size();
  const Eigen::Index keep = static_cast<Eigen::Index>(
      std::llround(fraction * static_cast<double>(n)));
  if (keep < 1) throw ConfigError("downsample would keep zero examples");
  if (keep >= n) return ds;

  Rng rng(seed);
  std::vector<int> perm = rng.permutation(static_cast<int>(n));
  perm.resize(static_cast<std::size_t>(keep));
  std::sort(perm.begin(), perm.end());

  Dataset out;
  out.domain_id = ds.domain_id;
  out.inputs.resize(keep, ds.inputs.cols());
  out.labels.resize(keep, ds.labels.cols());
  for (Eigen::Index i = 0; i < keep; ++i) {
    out.inputs.row(i) = ds.inputs.row(perm[static_cast<std::size_t>(i)]);
    out.labels.row(i) = ds.labels.row(perm[static_cast<std::size_t>(i)]);
  }
  return out;
}

Batcher::Batcher(Dataset ds, int batch_size, std::uint64_t seed)
    : ds_(std::move(ds)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
  if (static_cast<Eigen::Index>(batch_size_) > ds_.size()) {
    throw ConfigError("batch_size exceeds dataset size");
  }
  reshuffle();
}

void Batcher::reshuffle() {
  Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch_)));
  order_ = rng.permutation(static_cast<int>(ds_.size()));
  pos_ = 0;
}

DomainBatch Batcher::next() {
  if (pos_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t take =
      std::min(static_cast<std::size_t>(batch_size_), order_.size() - pos_);
  std::vector<int> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
  pos_ += take;
  return take_rows(ds_.as_batch(), idx);
}

namespace {

constexpr char kMagic[4] = {'M', 'M', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "dataset files assume a little-endian host");

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  const std::uint64_t payload =
      3 + 2 * static_cast<std::uint64_t>(ds.inputs.size());
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), 4);
  write_u64(out, payload);
  write_u64(out, static_cast<std::uint64_t>(ds.domain_id));
  write_u64(out, static_cast<std::uint64_t>(ds.inputs.rows()));
  write_u64(out, static_cast<std::uint64_t>(ds.inputs.cols()));
  out.write(reinterpret_cast<const char*>(ds.inputs.data()),
            static_cast<std::streamsize>(sizeof(double) * ds.inputs.size()));
  out.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(sizeof(double) * ds.labels.size()));
  if (!out) throw IoError("short write: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  std::uint32_t version = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  const std::uint64_t payload = read_u64(in);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a dataset file: " + path);
  }
  if (version != kVersion) throw IoError("unsupported dataset version: " + path);
  Dataset ds;
  ds.domain_id = static_cast<int>(read_u64(in));
  const auto rows = static_cast<Eigen::Index>(read_u64(in));
  const auto cols = static_cast<Eigen::Index>(read_u64(in));
  if (!in || payload != 3 + 2 * static_cast<std::uint64_t>(rows) *
                                static_cast<std::uint64_t>(cols)) {
    throw IoError("corrupt dataset header: " + path);
  }
  ds.inputs.resize(rows, cols);
  ds.labels.resize(rows, cols);
  in.read(reinterpret_cast<char*>(ds.inputs.data()),
          static_cast<std::streamsize>(sizeof(double) * ds.inputs.size()));
  in.read(reinterpret_cast<char*>(ds.labels.data()),
          static_cast<std::streamsize>(sizeof(double) * ds.labels.size()));
  if (!in) throw IoError("truncated dataset file: " + path);
  return ds;
}

}  // namespace metamdl
