#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adaprox/log.hpp"
#include "adaprox/types.hpp"

// Proximal operators. Each maps (x, step) -> argmin_z r(z) + (1/2·step)·‖z−x‖²
// for its penalty r. The ones shipped here are all step-independent: the
// indicator penalties project, and the hard threshold keeps its cut fixed at
// lambda by convention (no step·lambda rescaling), so lambda is the effective
// threshold the caller configures.

namespace adaprox {

inline Matrix prox_identity(const Matrix& x, double /*step*/) { return x; }

inline Matrix prox_nonneg(const Matrix& x, double /*step*/) {
  return x.cwiseMax(0.0);
}

// Normalizes every row to the simplex: row -> |row| / Σ|row_i|. This is a
// rescaling, not the Euclidean simplex projection, and that is deliberate.
// A row that is entirely zero has no direction to keep; it becomes the
// uniform row 1/d and the event is logged.
inline Matrix prox_unity_rows(const Matrix& x, double /*step*/) {
  Matrix out = x.cwiseAbs();
  for (Index r = 0; r < out.rows(); ++r) {
    const double total = out.row(r).sum();
    if (total > 0.0) {
      out.row(r) /= total;
    } else {
      out.row(r).setConstant(1.0 / static_cast<double>(out.cols()));
      warn("prox_unity_rows: row " + std::to_string(r) +
           " is all zero; replaced by the uniform row");
    }
  }
  return out;
}

// Keeps x_i only when |x_i| > lambda (strict), else zero.
inline Matrix prox_hard_threshold(const Matrix& x, double /*step*/,
                                  double lambda) {
  if (!(lambda > 0.0)) {
    throw std::invalid_argument("prox_hard_threshold: lambda must be > 0");
  }
  return (x.array().abs() > lambda).select(x, Matrix::Zero(x.rows(), x.cols()));
}

class ProxOperator {
 public:
  using Fn = std::function<Matrix(const Matrix&, double)>;
  // Mutating form used on the solver's hot path; must compute the same values
  // as Fn. The built-ins rewrite their argument without allocating.
  using InplaceFn = std::function<void(Matrix&, double)>;

  static ProxOperator identity() {
    return ProxOperator(
        "identity",
        [](const Matrix& x, double s) { return prox_identity(x, s); },
        [](Matrix&, double) {});
  }
  static ProxOperator nonneg() {
    return ProxOperator(
        "nonneg", [](const Matrix& x, double s) { return prox_nonneg(x, s); },
        [](Matrix& x, double) { x = x.cwiseMax(0.0); });
  }
  static ProxOperator unity_rows() {
    return ProxOperator(
        "unity_rows",
        [](const Matrix& x, double s) { return prox_unity_rows(x, s); },
        [](Matrix& x, double) {
          x = x.cwiseAbs();
          for (Index r = 0; r < x.rows(); ++r) {
            const double total = x.row(r).sum();
            if (total > 0.0) {
              x.row(r) /= total;
            } else {
              x.row(r).setConstant(1.0 / static_cast<double>(x.cols()));
              warn("prox_unity_rows: row " + std::to_string(r) +
                   " is all zero; replaced by the uniform row");
            }
          }
        });
  }
  static ProxOperator hard_threshold(double lambda) {
    if (!(lambda > 0.0)) {
      throw std::invalid_argument("hard_threshold: lambda must be > 0");
    }
    return ProxOperator(
        "hard_threshold",
        [lambda](const Matrix& x, double s) {
          return prox_hard_threshold(x, s, lambda);
        },
        [lambda](Matrix& x, double) {
          x = (x.array().abs() > lambda).select(x, 0.0);
        });
  }
  // Custom operators supply only the pure form; the in-place path falls back
  // to it.
  static ProxOperator custom(std::string name, Fn fn) {
    return ProxOperator(std::move(name), std::move(fn), {});
  }

  Matrix operator()(const Matrix& x, double step) const { return fn_(x, step); }
  void apply_inplace(Matrix& x, double step) const {
    if (inplace_) {
      inplace_(x, step);
    } else {
      x = fn_(x, step);
    }
  }
  const std::string& name() const { return name_; }

 private:
  ProxOperator(std::string name, Fn fn, InplaceFn inplace)
      : name_(std::move(name)),
        fn_(std::move(fn)),
        inplace_(std::move(inplace)) {}

  std::string name_;
  Fn fn_;
  InplaceFn inplace_;
};

// Ordered composition, applied left to right with the same step.
// An empty chain is the identity.
struct ProxChain {
  std::vector<ProxOperator> ops;

  ProxChain() = default;
  ProxChain(std::initializer_list<ProxOperator> list) : ops(list) {}

  bool empty() const { return ops.empty(); }
};

inline void prox_chain_apply_inplace(const ProxChain& chain, Matrix& z,
                                     double step) {
  for (const ProxOperator& op : chain.ops) op.apply_inplace(z, step);
}

inline Matrix prox_chain_apply(const ProxChain& chain, const Matrix& x,
                               double step) {
  Matrix z = x;
  prox_chain_apply_inplace(chain, z, step);
  return z;
}

}  // namespace adaprox
