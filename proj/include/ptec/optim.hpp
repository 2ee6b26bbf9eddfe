#pragma once

#include <cmath>
#include <string>

#include "ptec/param_vector.hpp"

namespace ptec {

/// Flat-then-geometric-anneal schedule: initial_lr through warm_epochs,
/// then multiplied by anneal_factor once per later epoch.
struct LrSchedule {
  double initial_lr = 0.0;
  int warm_epochs = 0;
  double anneal_factor = 1.0;
  int total_epochs = 0;
};

inline void validate(const LrSchedule& s, const char* what) {
  if (s.initial_lr <= 0.0)
    throw ContractViolation(std::string(what) + ": initial_lr must be > 0");
  if (s.anneal_factor <= 0.0 || s.anneal_factor > 1.0)
    throw ContractViolation(std::string(what) + ": anneal_factor must be in (0,1]");
  if (s.warm_epochs > s.total_epochs || s.warm_epochs < 0 || s.total_epochs < 1)
    throw ContractViolation(std::string(what) + ": bad warm/total epochs");
}

inline double lr_at(const LrSchedule& s, int epoch) {
  if (epoch < 1 || epoch > s.total_epochs)
    throw ContractViolation("lr_at: epoch " + std::to_string(epoch) +
                            " outside [1, " + std::to_string(s.total_epochs) + "]");
  if (epoch <= s.warm_epochs) return s.initial_lr;
  return s.initial_lr * std::pow(s.anneal_factor, epoch - s.warm_epochs);
}

inline LrSchedule constant_schedule(double lr, int epochs) {
  return LrSchedule{lr, epochs, 1.0, epochs};
}

/// params - lr * grad; inputs unmodified.
inline ParamVector sgd_step(const ParamVector& params, const GradVector& grad,
                            double lr) {
  require_same_dim(params.dim(), grad.dim(), "sgd_step");
  if (lr < 0.0) throw ContractViolation("sgd_step: lr must be >= 0");
  require_finite(grad, "sgd_step: grad");
  return axpy(params, -lr, grad);
}

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

inline AdamWState make_adamw_state(std::size_t dim, double beta1 = 0.9,
                                   double beta2 = 0.999, double eps = 1e-8,
                                   double weight_decay = 0.0) {
  AdamWState s;
  s.m.assign(dim, 0.0);
  s.v.assign(dim, 0.0);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  s.weight_decay = weight_decay;
  return s;
}

/// Decoupled-weight-decay Adam with bias correction.
inline ParamVector adamw_step(AdamWState& state, const ParamVector& params,
                              const GradVector& grad, double lr) {
  require_same_dim(params.dim(), grad.dim(), "adamw_step");
  require_same_dim(params.dim(), state.m.size(), "adamw_step state");
  require_finite(grad, "adamw_step: grad");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  ParamVector out = params;
  for (std::size_t i = 0; i < params.dim(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    out[i] -= lr * (mhat / (std::sqrt(vhat) + state.eps) +
                    state.weight_decay * params[i]);
  }
  return out;
}

/// Exactly one variant selected; AdamW hyperparameters travel with it.
struct OptimizerChoice {
  enum class Kind { PlainGd, AdamW };
  Kind kind = Kind::PlainGd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  static OptimizerChoice plain_gd() { return OptimizerChoice{}; }
  static OptimizerChoice adamw(double wd = 0.01) {
    OptimizerChoice c;
    c.kind = Kind::AdamW;
    c.weight_decay = wd;
    return c;
  }
};

/// Stateful optimizer instance bound to one parameter vector.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const OptimizerChoice& choice, std::size_t dim) : choice_(choice) {
    if (choice.kind == OptimizerChoice::Kind::AdamW)
      state_ = make_adamw_state(dim, choice.beta1, choice.beta2, choice.eps,
                                choice.weight_decay);
  }

  ParamVector step(const ParamVector& params, const GradVector& grad,
                   double lr) {
    if (choice_.kind == OptimizerChoice::Kind::PlainGd)
      return sgd_step(params, grad, lr);
    return adamw_step(state_, params, grad, lr);
  }

  const OptimizerChoice& choice() const { return choice_; }

 private:
  OptimizerChoice choice_;
  AdamWState state_;
};

}  // namespace ptec
