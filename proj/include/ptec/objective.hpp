#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "ptec/data.hpp"
#include "ptec/errors.hpp"
#include "ptec/param_vector.hpp"

namespace ptec {

/// Differentiable per-source loss. Implementations must be deterministic
/// given (params, batch) and must not mutate internal state during
/// evaluation, so lower-level solves can run concurrently.
class SourceObjective {
 public:
  struct Evaluation {
    double loss = 0.0;
    GradVector grad;
    bool degenerate = false;
  };

  virtual ~SourceObjective() = default;

  virtual int source_id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual double loss(const ParamVector& params, const Batch& batch) const = 0;
  virtual GradVector grad(const ParamVector& params,
                          const Batch& batch) const = 0;

  /// Combined loss + gradient. Implementations that can detect degenerate
  /// batches report them here; default never does.
  virtual Evaluation evaluate(const ParamVector& params,
                              const Batch& batch) const {
    return Evaluation{loss(params, batch), grad(params, batch), false};
  }
};

/// Central-difference gradient, component j =
/// (loss(p + h e_j) - loss(p - h e_j)) / (2h). The oracle for every
/// analytic gradient in the repository.
inline GradVector finite_diff_grad(const SourceObjective& obj,
                                   const ParamVector& params,
                                   const Batch& batch, double h = 1e-5) {
  if (h <= 0.0) throw ContractViolation("finite_diff_grad: h must be > 0");
  require_finite(params, "finite_diff_grad: params");
  GradVector g(params.dim());
  ParamVector probe = params;
  for (std::size_t j = 0; j < params.dim(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double lp = obj.loss(probe, batch);
    probe[j] = orig - h;
    const double lm = obj.loss(probe, batch);
    probe[j] = orig;
    if (!std::isfinite(lp) || !std::isfinite(lm)) {
      throw NumericalError("finite_diff_grad: non-finite loss probing component " +
                           std::to_string(j));
    }
    g[j] = (lp - lm) / (2.0 * h);
  }
  return g;
}

struct CheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t worst_index = 0;
};

/// Componentwise |analytic - fd| / max(1, |analytic|, |fd|). Reports always
/// come back; failure is a flag, not an exception.
inline CheckReport grad_check(const SourceObjective& obj,
                              const ParamVector& params, const Batch& batch,
                              double h, double tol) {
  if (h <= 0.0 || tol <= 0.0)
    throw ContractViolation("grad_check: h and tol must be > 0");
  if (params.dim() == 0)
    throw ContractViolation("grad_check: zero-dimension objective");
  const GradVector analytic = obj.grad(params, batch);
  const GradVector fd = finite_diff_grad(obj, params, batch, h);
  if (analytic.dim() != fd.dim())
    throw ContractViolation("grad_check: analytic/finite-difference dimension mismatch");
  CheckReport rep;
  for (std::size_t j = 0; j < analytic.dim(); ++j) {
    const double denom =
        std::max({1.0, std::abs(analytic[j]), std::abs(fd[j])});
    const double rel = std::abs(analytic[j] - fd[j]) / denom;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = j;
    }
  }
  rep.pass = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace ptec
