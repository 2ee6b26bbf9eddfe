#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ptec/errors.hpp"

namespace ptec {

/// Flat ordered sequence of 64-bit reals. Houses both the global parameter
/// vector and per-source local parameter vectors.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0)
      : values(dim, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}
  ParamVector(std::initializer_list<double> v) : values(v) {}

  std::size_t dim() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool operator==(const ParamVector&) const = default;
};

/// Same shape as ParamVector; semantic role is a gradient, not a parameter.
struct GradVector {
  std::vector<double> values;

  GradVector() = default;
  explicit GradVector(std::size_t dim, double fill = 0.0)
      : values(dim, fill) {}
  explicit GradVector(std::vector<double> v) : values(std::move(v)) {}
  GradVector(std::initializer_list<double> v) : values(v) {}

  std::size_t dim() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool operator==(const GradVector&) const = default;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractViolation(std::string(what) + ": dimension mismatch (" +
                            std::to_string(a) + " vs " + std::to_string(b) +
                            ")");
  }
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_finite(const ParamVector& p, const char* what) {
  for (std::size_t i = 0; i < p.dim(); ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericalError(std::string(what) + ": non-finite component " +
                           std::to_string(i));
    }
  }
}

inline void require_finite(const GradVector& g, const char* what) {
  for (std::size_t i = 0; i < g.dim(); ++i) {
    if (!std::isfinite(g[i])) {
      throw NumericalError(std::string(what) + ": non-finite component " +
                           std::to_string(i));
    }
  }
}

// p + s * g
inline ParamVector axpy(const ParamVector& p, double s, const GradVector& g) {
  require_same_dim(p.dim(), g.dim(), "axpy");
  ParamVector out = p;
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] += s * g[i];
  return out;
}

inline void add_inplace(GradVector& acc, const GradVector& g) {
  require_same_dim(acc.dim(), g.dim(), "add_inplace");
  for (std::size_t i = 0; i < acc.dim(); ++i) acc[i] += g[i];
}

inline void scale_inplace(GradVector& g, double s) {
  for (std::size_t i = 0; i < g.dim(); ++i) g[i] *= s;
}

inline double norm2(const GradVector& g) {
  double s = 0.0;
  for (double x : g.values) s += x * x;
  return std::sqrt(s);
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a.dim(), b.dim(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ptec
