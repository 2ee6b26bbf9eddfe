#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ptec/errors.hpp"
#include "ptec/hash.hpp"

namespace ptec {

/// One sequence of frames, row-major frames x feature_dim.
struct Sample {
  int frames = 0;
  int feature_dim = 0;
  std::vector<double> data;  // frames * feature_dim, row-major

  Sample() = default;
  Sample(int frames_, int feature_dim_)
      : frames(frames_),
        feature_dim(feature_dim_),
        data(static_cast<std::size_t>(frames_) * feature_dim_, 0.0) {}

  double& at(int t, int d) {
    return data[static_cast<std::size_t>(t) * feature_dim + d];
  }
  double at(int t, int d) const {
    return data[static_cast<std::size_t>(t) * feature_dim + d];
  }

  bool operator==(const Sample&) const = default;
};

/// Content hash used to derive deterministic per-sample mask streams.
inline std::uint64_t sample_hash(const Sample& s) {
  std::uint64_t h = hash_u64(static_cast<std::uint64_t>(s.frames));
  h = hash_u64(static_cast<std::uint64_t>(s.feature_dim), h);
  if (!s.data.empty())
    h = fnv1a64(s.data.data(), s.data.size() * sizeof(double), h);
  return h;
}

/// One heterogeneous data partition. `heldout` carries the per-source
/// evaluation split made at generation time.
struct DataSource {
  int source_id = 0;
  std::string name;
  std::vector<Sample> samples;
  std::vector<Sample> heldout;
  double size_weight = 0.0;
};

struct Batch {
  int source_id = 0;
  std::vector<Sample> samples;
};

inline Batch make_batch(const DataSource& src, const std::vector<int>& idx) {
  Batch b;
  b.source_id = src.source_id;
  b.samples.reserve(idx.size());
  for (int i : idx) b.samples.push_back(src.samples[static_cast<std::size_t>(i)]);
  return b;
}

/// Per-source distribution shift: frame features drawn i.i.d. from
/// N(mean, stddev^2) per dimension.
struct SourceShift {
  double mean = 0.0;
  double stddev = 1.0;
};

struct SyntheticSpec {
  int num_sources = 1;
  int feature_dim = 8;
  int frames_per_sample = 30;
  std::vector<int> samples_per_source;  // size num_sources
  std::vector<SourceShift> shifts;      // size num_sources
  double heldout_fraction = 0.2;
  std::uint64_t seed = 0;
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.num_sources < 1)
    throw ContractViolation("SyntheticSpec: num_sources must be >= 1");
  if (spec.feature_dim < 1 || spec.frames_per_sample < 1)
    throw ContractViolation("SyntheticSpec: dims must be >= 1");
  if (spec.samples_per_source.size() !=
      static_cast<std::size_t>(spec.num_sources))
    throw ContractViolation("SyntheticSpec: samples_per_source size mismatch");
  if (spec.shifts.size() != static_cast<std::size_t>(spec.num_sources))
    throw ContractViolation("SyntheticSpec: shifts size mismatch");
  for (int n : spec.samples_per_source)
    if (n < 1) throw ContractViolation("SyntheticSpec: sample counts must be >= 1");
  if (spec.heldout_fraction < 0.0 || spec.heldout_fraction >= 1.0)
    throw ContractViolation("SyntheticSpec: heldout_fraction must be in [0,1)");
}

/// Source i draws frames from its own Gaussian; deterministic given seed.
/// size_weight is set to the training sample count.
inline std::vector<DataSource> generate_synthetic_sources(
    const SyntheticSpec& spec) {
  validate(spec);
  std::vector<DataSource> out;
  out.reserve(static_cast<std::size_t>(spec.num_sources));
  for (int i = 0; i < spec.num_sources; ++i) {
    std::mt19937_64 rng(mix_seed(spec.seed, 0x5eedda7aULL,
                                 static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> dist(spec.shifts[static_cast<std::size_t>(i)].mean,
                                          spec.shifts[static_cast<std::size_t>(i)].stddev);
    const int total = spec.samples_per_source[static_cast<std::size_t>(i)];
    int heldout =
        static_cast<int>(spec.heldout_fraction * total);
    if (heldout >= total) heldout = total - 1;
    DataSource src;
    src.source_id = i;
    src.name = "source-" + std::to_string(i);
    for (int n = 0; n < total; ++n) {
      Sample s(spec.frames_per_sample, spec.feature_dim);
      for (double& x : s.data) x = dist(rng);
      if (n < total - heldout)
        src.samples.push_back(std::move(s));
      else
        src.heldout.push_back(std::move(s));
    }
    src.size_weight = static_cast<double>(src.samples.size());
    out.push_back(std::move(src));
  }
  return out;
}

}  // namespace ptec
