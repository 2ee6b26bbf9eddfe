#pragma once

#include <Eigen/Dense>
#include <utility>

#include "ptec/objective.hpp"

namespace ptec {

inline Eigen::VectorXd to_eigen(const ParamVector& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.values.data(),
                                           static_cast<Eigen::Index>(p.dim()));
}

inline ParamVector from_eigen(const Eigen::VectorXd& v) {
  return ParamVector(std::vector<double>(v.data(), v.data() + v.size()));
}

/// loss(phi) = 1/2 (phi - c)^T A (phi - c) with A symmetric positive
/// definite. Closed-form fixture for the inner trajectory and both
/// hypergradient routes.
class QuadraticSource : public SourceObjective {
 public:
  QuadraticSource(Eigen::MatrixXd A, Eigen::VectorXd c, int source_id)
      : A_(std::move(A)), c_(std::move(c)), source_id_(source_id) {
    if (A_.rows() != A_.cols() || A_.rows() != c_.size())
      throw ContractViolation("QuadraticSource: A/c shape mismatch");
    if ((A_ - A_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ContractViolation("QuadraticSource: A is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(A_);
    if (llt.info() != Eigen::Success)
      throw ContractViolation("QuadraticSource: A is not positive definite");
  }

  int source_id() const override { return source_id_; }
  std::size_t dim() const override { return static_cast<std::size_t>(A_.rows()); }

  const Eigen::MatrixXd& A() const { return A_; }
  const Eigen::VectorXd& c() const { return c_; }

  double loss(const ParamVector& params, const Batch&) const override {
    check_dim(params);
    const Eigen::VectorXd d = to_eigen(params) - c_;
    return 0.5 * d.dot(A_ * d);
  }

  GradVector grad(const ParamVector& params, const Batch&) const override {
    check_dim(params);
    const Eigen::VectorXd g = A_ * (to_eigen(params) - c_);
    return GradVector(std::vector<double>(g.data(), g.data() + g.size()));
  }

 private:
  void check_dim(const ParamVector& p) const {
    require_same_dim(p.dim(), dim(), "QuadraticSource");
  }

  Eigen::MatrixXd A_;
  Eigen::VectorXd c_;
  int source_id_;
};

inline std::pair<double, GradVector> quadratic_loss_grad(
    const QuadraticSource& q, const ParamVector& phi) {
  Batch empty;
  return {q.loss(phi, empty), q.grad(phi, empty)};
}

/// Exact K-step gradient-descent iterate from phi_0 = theta:
/// phi_K = c + (I - alpha A)^K (theta - c).
inline ParamVector quadratic_trajectory(const QuadraticSource& q,
                                        const ParamVector& theta, double alpha,
                                        int K) {
  if (K < 0) throw ContractViolation("quadratic_trajectory: K must be >= 0");
  if (alpha < 0.0)
    throw ContractViolation("quadratic_trajectory: alpha must be >= 0");
  require_same_dim(theta.dim(), q.dim(), "quadratic_trajectory");
  Eigen::VectorXd v = to_eigen(theta) - q.c();
  for (int k = 0; k < K; ++k) v -= alpha * (q.A() * v);
  return from_eigen(q.c() + v);
}

/// Gradient of theta -> g(phi_K(theta)) with the unrolled Jacobian factors
/// retained: (I - alpha A)^K A (I - alpha A)^K (theta - c).
inline GradVector exact_hypergradient_quadratic(const QuadraticSource& q,
                                                const ParamVector& theta,
                                                double alpha, int K) {
  if (K < 1)
    throw ContractViolation("exact_hypergradient_quadratic: K must be >= 1");
  require_same_dim(theta.dim(), q.dim(), "exact_hypergradient_quadratic");
  Eigen::VectorXd v = to_eigen(theta) - q.c();
  for (int k = 0; k < K; ++k) v -= alpha * (q.A() * v);
  v = q.A() * v;
  for (int k = 0; k < K; ++k) v -= alpha * (q.A() * v);
  return GradVector(std::vector<double>(v.data(), v.data() + v.size()));
}

/// Zero-Hessian approximation: grad of g at phi_K only,
/// A (I - alpha A)^K (theta - c).
inline GradVector first_order_hypergradient_quadratic(const QuadraticSource& q,
                                                      const ParamVector& theta,
                                                      double alpha, int K) {
  if (K < 1)
    throw ContractViolation("first_order_hypergradient_quadratic: K must be >= 1");
  require_same_dim(theta.dim(), q.dim(), "first_order_hypergradient_quadratic");
  Eigen::VectorXd v = to_eigen(theta) - q.c();
  for (int k = 0; k < K; ++k) v -= alpha * (q.A() * v);
  v = q.A() * v;
  return GradVector(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace ptec
