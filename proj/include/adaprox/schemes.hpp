#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "adaprox/types.hpp"

// The adaptive-scheme family. Each scheme consumes the gradient stream g_1,
// g_2, ... and emits per-element pairs (phi_t, psi_t); the solver then steps
// x <- x - alpha_t * phi_t / psi_t. The recurrences:
//
//   pgm_plain: phi = g, psi = 1
//   adagrad:   phi = g, psi = sqrt((1/t) * sum_{i<=t} g_i^2)
//   adam:      m_t = b1*m + (1-b1)*g;  v_t = b2*v + (1-b2)*g^2
//              phi = m_t/(1-b1^t);     psi = sqrt(v_t/(1-b2^t)) + eps
//   amsgrad:   m as adam (scheduled b1 allowed); vhat_t = max(vhat, v_t)
//              phi = m_t;              psi = sqrt(vhat_t)
//   adamx:     as amsgrad but vhat_t = max(((1-b1_t)^2/(1-b1_{t-1})^2)*vhat, v_t)
//   padam:     as amsgrad but psi = vhat_t^p, p in (0, 1/2]
//
// adagrad keeps a running sum of squared gradients rather than the history;
// note the 1/t average in its psi, which differs from the classical
// unaveraged accumulator. adam uses the constant beta1 (its bias correction
// assumes one); the beta1 schedule applies to amsgrad/adamx/padam.

namespace adaprox {

enum class Scheme { PgmPlain, AdaGrad, Adam, AmsGrad, AdamX, PAdam };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::PgmPlain: return "pgm_plain";
    case Scheme::AdaGrad: return "adagrad";
    case Scheme::Adam: return "adam";
    case Scheme::AmsGrad: return "amsgrad";
    case Scheme::AdamX: return "adamx";
    case Scheme::PAdam: return "padam";
  }
  return "?";
}

inline Scheme scheme_from_name(const std::string& name) {
  if (name == "pgm_plain") return Scheme::PgmPlain;
  if (name == "adagrad") return Scheme::AdaGrad;
  if (name == "adam") return Scheme::Adam;
  if (name == "amsgrad") return Scheme::AmsGrad;
  if (name == "adamx") return Scheme::AdamX;
  if (name == "padam") return Scheme::PAdam;
  throw std::invalid_argument("unknown scheme: " + name);
}

struct SchemeConfig {
  Scheme scheme = Scheme::AmsGrad;
  double beta1 = 0.9;
  // Optional schedule beta1_t, t >= 1; overrides the constant when set.
  std::function<double(int)> beta1_schedule;
  double beta2 = 0.999;
  double eps = 1e-8;
  double p = 0.125;  // padam exponent

  double beta1_at(int t) const {
    const double b = beta1_schedule ? beta1_schedule(t) : beta1;
    if (!(b >= 0.0 && b < 1.0)) {
      throw std::invalid_argument("beta1_t must lie in [0,1)");
    }
    return b;
  }

  void validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) {
      throw std::invalid_argument("beta1 must lie in [0,1)");
    }
    if (!(beta2 >= 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("beta2 must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
    if (scheme == Scheme::PAdam && !(p > 0.0 && p <= 0.5)) {
      throw std::invalid_argument("padam p must lie in (0, 1/2]");
    }
  }
};

struct SchemeState {
  int t = 0;  // completed updates; the first scheme_update advances to t=1
  Matrix m, v, v_hat, g_sq_sum;

  static SchemeState zero(Index rows, Index cols) {
    SchemeState s;
    s.m = Matrix::Zero(rows, cols);
    s.v = Matrix::Zero(rows, cols);
    s.v_hat = Matrix::Zero(rows, cols);
    s.g_sq_sum = Matrix::Zero(rows, cols);
    return s;
  }
};

struct SchemeUpdate {
  Matrix phi;
  Matrix psi;
};

inline SchemeUpdate scheme_update(SchemeState& state, const Matrix& g,
                                  const SchemeConfig& cfg) {
  cfg.validate();
  if (!g.allFinite()) {
    throw std::domain_error("scheme_update: gradient has non-finite entries");
  }
  if (state.t == 0 && state.m.size() == 0) {
    state = SchemeState::zero(g.rows(), g.cols());
  }
  if (state.m.rows() != g.rows() || state.m.cols() != g.cols()) {
    throw std::invalid_argument("scheme_update: gradient shape " +
                                std::to_string(g.rows()) + "x" +
                                std::to_string(g.cols()) +
                                " does not match the scheme state");
  }

  const int t = ++state.t;
  SchemeUpdate out;
  switch (cfg.scheme) {
    case Scheme::PgmPlain:
      out.phi = g;
      out.psi = Matrix::Ones(g.rows(), g.cols());
      return out;

    case Scheme::AdaGrad:
      state.g_sq_sum.array() += g.array().square();
      out.phi = g;
      out.psi = (state.g_sq_sum.array() / static_cast<double>(t)).sqrt();
      return out;

    case Scheme::Adam: {
      const double b1 = cfg.beta1;
      state.m = b1 * state.m + (1.0 - b1) * g;
      state.v.array() =
          cfg.beta2 * state.v.array() + (1.0 - cfg.beta2) * g.array().square();
      out.phi = state.m / (1.0 - std::pow(b1, t));
      out.psi = (state.v.array() / (1.0 - std::pow(cfg.beta2, t))).sqrt() +
                cfg.eps;
      return out;
    }

    case Scheme::AmsGrad:
    case Scheme::AdamX:
    case Scheme::PAdam: {
      const double b1t = cfg.beta1_at(t);
      state.m = b1t * state.m + (1.0 - b1t) * g;
      state.v.array() =
          cfg.beta2 * state.v.array() + (1.0 - cfg.beta2) * g.array().square();
      if (cfg.scheme == Scheme::AdamX && t > 1) {
        // With a constant beta1 the ratio is exactly 1 and the recurrence
        // coincides with amsgrad's bit for bit.
        const double num = (1.0 - b1t) * (1.0 - b1t);
        const double prev = 1.0 - cfg.beta1_at(t - 1);
        const double factor = num / (prev * prev);
        state.v_hat = (factor * state.v_hat).cwiseMax(state.v);
      } else {
        state.v_hat = state.v_hat.cwiseMax(state.v);
      }
      out.phi = state.m;
      if (cfg.scheme == Scheme::PAdam && cfg.p != 0.5) {
        out.psi = state.v_hat.array().pow(cfg.p);
      } else {
        // amsgrad/adamx, and padam at p=1/2 which reduces to the amsgrad
        // scale; sqrt keeps that reduction exact.
        out.psi = state.v_hat.array().sqrt();
      }
      return out;
    }
  }
  throw std::logic_error("scheme_update: unhandled scheme");
}

// Step-size schedule: a base step alpha (constant, or alpha/sqrt(t)), with an
// optional strictly positive per-element scale for blocks whose components
// need individual steps.
struct StepSchedule {
  enum class Kind { Constant, InverseSqrt };

  Kind kind = Kind::Constant;
  double alpha = 0.1;
  Matrix scale;  // empty, or per-element factors of the block's shape

  bool has_scale() const { return scale.size() > 0; }
};

inline double step_base_at(const StepSchedule& s, int t) {
  if (t < 1) throw std::invalid_argument("step schedule: t must be >= 1");
  if (!(s.alpha > 0.0)) throw std::invalid_argument("step schedule: alpha must be > 0");
  return s.kind == StepSchedule::Kind::InverseSqrt
             ? s.alpha / std::sqrt(static_cast<double>(t))
             : s.alpha;
}

// Full step at iteration t: base times the per-element scale when present.
// Without a scale the result is 1x1 (one uniform step).
inline Matrix step_at(const StepSchedule& s, int t) {
  const double base = step_base_at(s, t);
  if (!s.has_scale()) return Matrix::Constant(1, 1, base);
  return base * s.scale;
}

}  // namespace adaprox
