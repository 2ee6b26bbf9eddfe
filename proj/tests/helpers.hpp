#pragma once

#include <memory>
#include <vector>

#include "ptec/masked_model.hpp"
#include "ptec/quadratic.hpp"
#include "ptec/trainer.hpp"

namespace ptec::testing {

inline std::shared_ptr<QuadraticSource> scalar_quadratic(double a, double c,
                                                         int id) {
  Eigen::MatrixXd A(1, 1);
  A(0, 0) = a;
  Eigen::VectorXd cv(1);
  cv(0) = c;
  return std::make_shared<QuadraticSource>(A, cv, id);
}

inline DataSource placeholder_source(int id, int n_samples, int dim = 1) {
  DataSource src;
  src.source_id = id;
  src.name = "fixture-" + std::to_string(id);
  for (int n = 0; n < n_samples; ++n) src.samples.emplace_back(1, dim);
  src.heldout.emplace_back(1, dim);
  src.size_weight = static_cast<double>(n_samples);
  return src;
}

inline Batch empty_batch(int id = 0) {
  Batch b;
  b.source_id = id;
  b.samples.emplace_back(1, 1);
  return b;
}

/// The scalar two-source fixture used throughout: A1=1,c1=0; A2=4,c2=1.
struct TwoQuadratics {
  std::vector<std::shared_ptr<SourceObjective>> objectives;
  std::vector<DataSource> sources;
  TwoQuadratics(int n_samples = 8) {
    objectives.push_back(scalar_quadratic(1.0, 0.0, 0));
    objectives.push_back(scalar_quadratic(4.0, 1.0, 1));
    sources.push_back(placeholder_source(0, n_samples));
    sources.push_back(placeholder_source(1, n_samples));
  }
};

inline Eigen::MatrixXd random_spd(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd B(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) B(i, j) = dist(rng);
  Eigen::MatrixXd A = B.transpose() * B + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
  // exact symmetry, not just up to rounding
  return ((A + A.transpose()) / 2.0).eval();
}

inline MaskedPredictionModel small_masked_model(int source_id = 0,
                                                std::uint64_t seed = 7,
                                                double start_prob = 0.3,
                                                int span = 3) {
  MaskSpec spec{start_prob, span, 0.0, 0.1};
  return MaskedPredictionModel(4, 8, 16, 6, spec, seed, source_id);
}

inline Batch gaussian_batch(int source_id, int n_samples, int frames, int dim,
                            std::uint64_t seed, double mean = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, 1.0);
  Batch b;
  b.source_id = source_id;
  for (int n = 0; n < n_samples; ++n) {
    Sample s(frames, dim);
    for (double& x : s.data) x = dist(rng);
    b.samples.push_back(std::move(s));
  }
  return b;
}

}  // namespace ptec::testing
