#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>

#include "adaprox/log.hpp"
#include "adaprox/types.hpp"

namespace adaprox {

// Number of spectral-norm evaluations since process start. The plain PGM
// path pays one per block per iteration; the adaptive path must never touch
// this counter.
inline std::atomic<std::uint64_t>& spectral_norm_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

// Largest eigenvalue of M Mᵀ (the squared largest singular value of M), by
// power iteration. M and Mᵀ are applied in turn instead of forming the
// product, so the same routine serves operators too large to materialize.
// Deterministic all-ones start vector; stops when the Rayleigh estimate
// moves by less than rel_tol relatively. If the cap is hit, falls back to
// the Frobenius upper bound ‖M‖_F² with a warning.
inline double gram_spectral_norm(const Matrix& m, double rel_tol = 1e-8,
                                 int max_iter = 1000) {
  spectral_norm_count().fetch_add(1, std::memory_order_relaxed);
  if (m.size() == 0) return 0.0;
  Vector v = Vector::Ones(m.rows()) / std::sqrt(static_cast<double>(m.rows()));
  Vector w(m.cols()), u(m.rows());
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    w.noalias() = m.transpose() * v;
    u.noalias() = m * w;
    const double next = v.dot(u);  // Rayleigh quotient of M Mᵀ at unit v
    const double nrm = u.norm();
    if (nrm == 0.0) return 0.0;  // v lies in the null space of M Mᵀ
    v = u / nrm;
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) {
      return next;
    }
    lambda = next;
  }
  const double bound = m.squaredNorm();
  warn("power iteration hit its cap; using Frobenius bound " +
       std::to_string(bound));
  return bound;
}

}  // namespace adaprox
