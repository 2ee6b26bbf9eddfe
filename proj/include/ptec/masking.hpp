#pragma once

#include <random>
#include <utility>
#include <vector>

#include "ptec/data.hpp"
#include "ptec/errors.hpp"

namespace ptec {

struct MaskSpec {
  double start_prob = 0.02;  // per-frame probability of opening a span
  int span = 20;             // frames per span, clipped at sequence end
  double noise_mean = 0.0;
  double noise_var = 0.1;
};

inline void validate(const MaskSpec& spec) {
  if (spec.start_prob < 0.0 || spec.start_prob > 1.0)
    throw ContractViolation("MaskSpec: start_prob must be in [0,1]");
  if (spec.span < 1) throw ContractViolation("MaskSpec: span must be >= 1");
  if (spec.noise_var < 0.0)
    throw ContractViolation("MaskSpec: noise_var must be >= 0");
}

/// Each frame independently opens a span of spec.span frames with
/// probability start_prob; overlapping spans merge. Masked frames are
/// replaced by Gaussian noise. Returns the masked sample and the sorted
/// list of replaced frame indices. Deterministic given the rng state.
inline std::pair<Sample, std::vector<int>> apply_masking(const Sample& sample,
                                                         const MaskSpec& spec,
                                                         std::mt19937_64& rng) {
  validate(spec);
  if (sample.frames < 1)
    throw ContractViolation("apply_masking: sample must have >= 1 frame");
  std::vector<bool> masked(static_cast<std::size_t>(sample.frames), false);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < sample.frames; ++t) {
    if (unif(rng) < spec.start_prob) {
      const int end = std::min(sample.frames, t + spec.span);
      for (int u = t; u < end; ++u) masked[static_cast<std::size_t>(u)] = true;
    }
  }
  Sample out = sample;
  std::normal_distribution<double> noise(spec.noise_mean,
                                         std::sqrt(spec.noise_var));
  std::vector<int> indices;
  for (int t = 0; t < sample.frames; ++t) {
    if (!masked[static_cast<std::size_t>(t)]) continue;
    indices.push_back(t);
    for (int d = 0; d < sample.feature_dim; ++d) out.at(t, d) = noise(rng);
  }
  return {std::move(out), std::move(indices)};
}

/// Frozen random-projection quantizer: projection and codebook define the
/// prediction targets and are immutable after construction.
class RandomQuantizer {
 public:
  RandomQuantizer(int feature_dim, int code_dim, int codebook_size,
                  std::uint64_t seed)
      : feature_dim_(feature_dim),
        code_dim_(code_dim),
        codebook_size_(codebook_size) {
    if (feature_dim < 1 || code_dim < 1 || codebook_size < 1)
      throw ContractViolation("RandomQuantizer: dims must be >= 1");
    std::mt19937_64 rng(mix_seed(seed, 0x9a47ULL));
    std::normal_distribution<double> dist(0.0, 1.0);
    projection_.resize(static_cast<std::size_t>(feature_dim) * code_dim);
    for (double& x : projection_) x = dist(rng);
    codebook_.resize(static_cast<std::size_t>(codebook_size) * code_dim);
    for (double& x : codebook_) x = dist(rng);
  }

  /// Test-only constructor with explicit matrices (row-major).
  RandomQuantizer(int feature_dim, int code_dim, std::vector<double> projection,
                  std::vector<double> codebook)
      : feature_dim_(feature_dim),
        code_dim_(code_dim),
        codebook_size_(static_cast<int>(codebook.size()) / code_dim),
        projection_(std::move(projection)),
        codebook_(std::move(codebook)) {
    if (projection_.size() !=
            static_cast<std::size_t>(feature_dim_) * code_dim_ ||
        codebook_.size() % static_cast<std::size_t>(code_dim_) != 0)
      throw ContractViolation("RandomQuantizer: matrix shape mismatch");
  }

  int feature_dim() const { return feature_dim_; }
  int code_dim() const { return code_dim_; }
  int codebook_size() const { return codebook_size_; }

  /// projection^T frame, code_dim entries.
  std::vector<double> project(const Sample& s, int t) const {
    std::vector<double> p(static_cast<std::size_t>(code_dim_), 0.0);
    for (int d = 0; d < feature_dim_; ++d) {
      const double x = s.at(t, d);
      for (int k = 0; k < code_dim_; ++k)
        p[static_cast<std::size_t>(k)] +=
            x * projection_[static_cast<std::size_t>(d) * code_dim_ + k];
    }
    return p;
  }

  /// Nearest codebook row by Euclidean distance; ties go to the lowest index.
  int nearest(const std::vector<double>& projected) const {
    int best = 0;
    double best_d2 = distance2(projected, 0);
    for (int r = 1; r < codebook_size_; ++r) {
      const double d2 = distance2(projected, r);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = r;
      }
    }
    return best;
  }

 private:
  double distance2(const std::vector<double>& p, int row) const {
    double s = 0.0;
    for (int k = 0; k < code_dim_; ++k) {
      const double d =
          p[static_cast<std::size_t>(k)] -
          codebook_[static_cast<std::size_t>(row) * code_dim_ + k];
      s += d * d;
    }
    return s;
  }

  int feature_dim_;
  int code_dim_;
  int codebook_size_;
  std::vector<double> projection_;
  std::vector<double> codebook_;
};

/// Per-frame label indices from the clean input; independent of model
/// parameters.
inline std::vector<int> quantize_targets(const RandomQuantizer& quantizer,
                                         const Sample& sample) {
  if (sample.feature_dim != quantizer.feature_dim())
    throw ContractViolation("quantize_targets: feature_dim mismatch");
  std::vector<int> labels(static_cast<std::size_t>(sample.frames));
  for (int t = 0; t < sample.frames; ++t)
    labels[static_cast<std::size_t>(t)] = quantizer.nearest(quantizer.project(sample, t));
  return labels;
}

}  // namespace ptec
