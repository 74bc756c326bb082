#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adaprox/prox.hpp"
#include "adaprox/schemes.hpp"
#include "adaprox/types.hpp"

// Two engines over the same block structure:
//
//  pgm:     x <- prox_chain(x - grad/L, 1/L), with L recomputed per block per
//           outer iteration from the problem's analytic Lipschitz bound.
//  adaprox: the scheme turns the gradient stream into (phi, psi); the solver
//           takes the diagonally scaled step x_hat = x - alpha*phi/psi and
//           resolves the constraint through the scaled proximal operator,
//           iterating  z <- prox_chain(z - (psi/max psi) ⊙ (z - x_hat), gamma)
//           from z = x_hat with gamma = alpha/max(psi) until the relative
//           change drops below tol_inner.
//
// Blocks update in declared order. The two modes differ in where gradients
// are taken: pgm alternates (each block's gradient and Lipschitz bound see
// the blocks already updated this iteration), while adaprox evaluates every
// block's gradient at the iterate the outer step started from, as one
// diagonally-scaled step of the whole parameter vector. The run converges
// when every block passes the relative-change test in the same iteration.

namespace adaprox {

struct ParameterBlock {
  std::string name;
  Matrix values;
  StepSchedule step_schedule;
  ProxChain prox;
};

// Differentiable loss over parameter blocks. lipschitz() is only required by
// pgm mode and may throw in problems that do not support it.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual double loss(const std::vector<ParameterBlock>& blocks) const = 0;
  virtual Matrix gradient(const std::vector<ParameterBlock>& blocks,
                          std::size_t index) const = 0;
  // All block gradients at the same evaluation point. The default defers to
  // gradient(); problems whose partial gradients share intermediates (the
  // factorization residual) override this to compute them in one pass.
  virtual std::vector<Matrix> gradients(
      const std::vector<ParameterBlock>& blocks) const {
    std::vector<Matrix> out;
    out.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.push_back(gradient(blocks, i));
    }
    return out;
  }
  virtual double lipschitz(const std::vector<ParameterBlock>& blocks,
                           std::size_t index) const = 0;
};

enum class SolveMode { Pgm, AdaProx };

inline const char* mode_name(SolveMode m) {
  return m == SolveMode::Pgm ? "pgm" : "adaprox";
}

struct SolverConfig {
  SchemeConfig scheme_cfg;
  int max_iter = 1000;
  double tol_outer = 1e-4;
  double tol_inner = 1e-4;   // sub-iteration test; defaults mirror tol_outer
  int max_subiter = 100;
  double psi_floor = 1e-12;  // clamp before any division by psi

  void validate() const {
    scheme_cfg.validate();
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (!(tol_outer > 0.0)) throw std::invalid_argument("tol_outer must be > 0");
    if (!(tol_inner > 0.0)) throw std::invalid_argument("tol_inner must be > 0");
    if (max_subiter < 1) throw std::invalid_argument("max_subiter must be >= 1");
    if (!(psi_floor > 0.0)) throw std::invalid_argument("psi_floor must be > 0");
  }
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  double loss = 0.0;
  std::vector<int> subiters;        // per block
  std::vector<double> rel_change;   // per block
  double elapsed_s = 0.0;           // cumulative wall clock inside solve()
};

enum class ConvergenceFlag { Converged, MaxIterReached };

inline const char* flag_name(ConvergenceFlag f) {
  return f == ConvergenceFlag::Converged ? "converged" : "max_iter";
}

struct RunMeta {
  std::string problem;
  std::string mode;
  std::string scheme;
  double alpha = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double eps = 0.0;
  double p = 0.0;
  std::uint64_t seed = 0;
};

struct RunTrace {
  std::vector<std::string> block_names;
  std::vector<IterationRecord> iterations;
  ConvergenceFlag flag = ConvergenceFlag::MaxIterReached;
  RunMeta meta;

  double final_loss() const {
    return iterations.empty() ? std::numeric_limits<double>::quiet_NaN()
                              : iterations.back().loss;
  }
};

// Raised when iterates or the loss stop being finite. Carries whatever trace
// had been recorded before the failing iteration.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& msg, RunTrace partial = {})
      : std::runtime_error(msg), trace(std::move(partial)) {}
  RunTrace trace;
};

// ‖Δ‖ < tol·‖x_new‖, except an all-zero new iterate counts as converged only
// when the change is exactly zero.
inline bool rel_change_converged(double diff_norm, double new_norm,
                                 double tol) {
  if (new_norm > 0.0) return diff_norm < tol * new_norm;
  return diff_norm == 0.0;
}

inline Matrix pgm_block_step(const ParameterBlock& block, const Matrix& grad,
                             double lipschitz) {
  if (!(lipschitz > 0.0)) {
    throw std::invalid_argument("pgm_block_step: Lipschitz bound must be > 0");
  }
  const double alpha = 1.0 / lipschitz;
  return prox_chain_apply(block.prox, block.values - alpha * grad, alpha);
}

struct ScaledProxResult {
  Matrix z;
  int subiters = 0;
  bool hit_cap = false;
};

// Variable-metric prox: minimizes r(z) + (1/2·alpha)·‖z − x_hat‖²_Diag(psi)
// through plain proximal sub-iterations with step gamma = alpha/max(psi).
// Starts from z = x_hat; each pass applies the chain once, so the count says
// how many prox applications the block update cost.
inline ScaledProxResult scaled_prox_solve(const Matrix& x_hat,
                                          const Matrix& psi, double alpha_t,
                                          const ProxChain& chain,
                                          double tol_inner, int max_subiter) {
  if (!(alpha_t > 0.0)) {
    throw std::invalid_argument("scaled_prox_solve: alpha_t must be > 0");
  }
  if (psi.rows() != x_hat.rows() || psi.cols() != x_hat.cols()) {
    throw std::invalid_argument("scaled_prox_solve: psi shape mismatch");
  }
  const double psi_max = psi.maxCoeff();
  if (!(psi_max > 0.0)) {
    throw std::invalid_argument("scaled_prox_solve: psi must be positive");
  }
  const double gamma = alpha_t / psi_max;
  const Matrix weight = psi / psi_max;
  Matrix z = x_hat;
  Matrix next;  // work buffer, reused across sub-iterations
  for (int tau = 1; tau <= max_subiter; ++tau) {
    next = z - weight.cwiseProduct(z - x_hat);
    prox_chain_apply_inplace(chain, next, gamma);
    if (!next.allFinite()) {
      throw NumericalFailure(
          "scaled_prox_solve: iterate became non-finite at sub-iteration " +
          std::to_string(tau));
    }
    const double diff = (next - z).norm();
    const double scale = next.norm();
    z.swap(next);
    if (rel_change_converged(diff, scale, tol_inner)) {
      return {std::move(z), tau, false};
    }
  }
  return {std::move(z), max_subiter, true};
}

struct BlockStepResult {
  Matrix values;
  int subiters = 0;
  bool hit_cap = false;
};

// One adaptive block update: scheme, diagonally scaled gradient step, scaled
// prox. A per-element step scale folds into the metric (psi/scale) so the
// inner solve still sees one scalar base step.
inline BlockStepResult adaprox_block_step(const ParameterBlock& block,
                                          SchemeState& state,
                                          const Matrix& grad,
                                          const SolverConfig& cfg, int t) {
  SchemeUpdate su = scheme_update(state, grad, cfg.scheme_cfg);
  const Matrix psi = su.psi.cwiseMax(cfg.psi_floor);
  const double base = step_base_at(block.step_schedule, t);

  Matrix x_hat;
  ScaledProxResult res;
  if (block.step_schedule.has_scale()) {
    const Matrix& s = block.step_schedule.scale;
    if (s.rows() != grad.rows() || s.cols() != grad.cols()) {
      throw std::invalid_argument("step scale shape does not match block '" +
                                  block.name + "'");
    }
    x_hat = block.values -
            base * (s.array() * su.phi.array() / psi.array()).matrix();
    const Matrix psi_eff = (psi.array() / s.array()).matrix();
    res = scaled_prox_solve(x_hat, psi_eff, base, block.prox, cfg.tol_inner,
                            cfg.max_subiter);
  } else {
    x_hat = block.values - base * (su.phi.array() / psi.array()).matrix();
    res = scaled_prox_solve(x_hat, psi, base, block.prox, cfg.tol_inner,
                            cfg.max_subiter);
  }
  return {std::move(res.z), res.subiters, res.hit_cap};
}

using IterationObserver = std::function<void(
    const IterationRecord&, const std::vector<ParameterBlock>&)>;

inline RunTrace solve(const Problem& problem,
                      std::vector<ParameterBlock>& blocks,
                      const SolverConfig& cfg, SolveMode mode,
                      RunMeta meta = {},
                      const IterationObserver& observer = {}) {
  cfg.validate();
  if (blocks.empty()) throw std::invalid_argument("solve: no parameter blocks");
  for (const ParameterBlock& b : blocks) {
    if (!b.values.allFinite()) {
      throw std::invalid_argument("solve: block '" + b.name +
                                  "' starts with non-finite values");
    }
    if (mode == SolveMode::AdaProx && b.step_schedule.has_scale()) {
      if ((b.step_schedule.scale.array() <= 0.0).any()) {
        throw std::invalid_argument("solve: step scale for block '" + b.name +
                                    "' must be strictly positive");
      }
    }
  }

  RunTrace trace;
  trace.meta = std::move(meta);
  trace.block_names.reserve(blocks.size());
  for (const ParameterBlock& b : blocks) trace.block_names.push_back(b.name);

  std::vector<SchemeState> states;
  states.reserve(blocks.size());
  for (const ParameterBlock& b : blocks) {
    states.push_back(SchemeState::zero(b.values.rows(), b.values.cols()));
  }

  const auto start = std::chrono::steady_clock::now();
  for (int t = 1; t <= cfg.max_iter; ++t) {
    IterationRecord rec;
    rec.iteration = t;
    bool all_converged = true;

    try {
      // Gradient evaluation point differs by mode. Adaptive schemes treat the
      // whole parameter set as one vector stepping from x_t: every block's
      // partial gradient is taken before any block moves. Sequential
      // evaluation instead feeds the adaptive moment estimates a moving
      // target — the blocks chase each other along the factorization's scale
      // degeneracy and the outer relative change stalls just above tolerance.
      // PGM stays alternating (each step sees co-blocks already updated this
      // iteration): that is what makes its 1/L steps monotone, and the joint
      // variant has no such guarantee and readily overshoots.
      std::vector<Matrix> pre_grads;
      if (mode == SolveMode::AdaProx) {
        pre_grads = problem.gradients(blocks);
        if (pre_grads.size() != blocks.size()) {
          throw std::logic_error(
              "solve: problem.gradients returned the wrong block count");
        }
      }

      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Matrix grad = mode == SolveMode::AdaProx
                                ? std::move(pre_grads[i])
                                : problem.gradient(blocks, i);
        if (!grad.allFinite()) {
          throw NumericalFailure("gradient for block '" + blocks[i].name +
                                 "' is non-finite at iteration " +
                                 std::to_string(t));
        }

        Matrix updated;
        int subiters = 1;
        if (mode == SolveMode::Pgm) {
          updated = pgm_block_step(blocks[i], grad, problem.lipschitz(blocks, i));
        } else {
          BlockStepResult r = adaprox_block_step(blocks[i], states[i], grad, cfg, t);
          updated = std::move(r.values);
          subiters = r.subiters;
        }
        if (!updated.allFinite()) {
          throw NumericalFailure("block '" + blocks[i].name +
                                 "' became non-finite at iteration " +
                                 std::to_string(t));
        }

        const double diff = (updated - blocks[i].values).norm();
        const double scale = updated.norm();
        blocks[i].values = std::move(updated);
        rec.subiters.push_back(subiters);
        rec.rel_change.push_back(
            scale > 0.0 ? diff / scale
                        : (diff == 0.0 ? 0.0
                                       : std::numeric_limits<double>::infinity()));
        all_converged =
            all_converged && rel_change_converged(diff, scale, cfg.tol_outer);
      }
    } catch (NumericalFailure& e) {
      throw NumericalFailure(e.what(), std::move(trace));
    }

    const double loss = problem.loss(blocks);
    if (!std::isfinite(loss)) {
      throw NumericalFailure(
          "loss is non-finite at iteration " + std::to_string(t),
          std::move(trace));
    }
    rec.loss = loss;
    rec.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    trace.iterations.push_back(std::move(rec));
    if (observer) observer(trace.iterations.back(), blocks);

    if (all_converged) {
      trace.flag = ConvergenceFlag::Converged;
      return trace;
    }
  }
  trace.flag = ConvergenceFlag::MaxIterReached;
  return trace;
}

}  // namespace adaprox
