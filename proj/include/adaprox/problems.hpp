#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adaprox/linalg.hpp"
#include "adaprox/log.hpp"
#include "adaprox/schemes.hpp"
#include "adaprox/solver.hpp"
#include "adaprox/types.hpp"

// Matrix factorization problems over blocks A (C×K mixing weights) and
// S (K×N components): the plain least-squares loss ½‖AS−Y‖², and the
// multi-band variant that weights each band (row) l by its noise level,
// ½·Σ_l σ_l⁻²‖A_l S − Y_l‖². The mixture-model flavor (each row of A on the
// simplex) reuses the plain loss; the constraint lives entirely in A's prox
// chain.

namespace adaprox {

namespace detail {

inline void check_factor_shapes(const Matrix& a, const Matrix& s,
                                const Matrix& y, const char* where) {
  if (a.cols() != s.rows() || a.rows() != y.rows() || s.cols() != y.cols()) {
    throw std::invalid_argument(
        std::string(where) + ": shapes do not conform: A " +
        std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ", S " +
        std::to_string(s.rows()) + "x" + std::to_string(s.cols()) + ", Y " +
        std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
  }
}

inline void check_band_sigma(const Matrix& y, const Vector& sigma,
                             const char* where) {
  if (sigma.size() != y.rows()) {
    throw std::invalid_argument(std::string(where) +
                                ": need one sigma per band");
  }
  if ((sigma.array() <= 0.0).any()) {
    throw std::invalid_argument(std::string(where) +
                                ": band sigma must be > 0");
  }
}

}  // namespace detail

inline double nmf_loss(const Matrix& a, const Matrix& s, const Matrix& y) {
  detail::check_factor_shapes(a, s, y, "nmf_loss");
  return 0.5 * (a * s - y).squaredNorm();
}

struct BlockGradients {
  Matrix a;
  Matrix s;
};

inline BlockGradients nmf_grads(const Matrix& a, const Matrix& s,
                                const Matrix& y) {
  detail::check_factor_shapes(a, s, y, "nmf_grads");
  const Matrix r = a * s - y;
  return {r * s.transpose(), a.transpose() * r};
}

struct BlockLipschitz {
  double a = 0.0;
  double s = 0.0;
};

// L_A = ‖S Sᵀ‖_s and L_S = ‖Aᵀ A‖_s, with a tiny floor so degenerate
// matrices cannot push PGM's 1/L step to infinity.
inline BlockLipschitz nmf_lipschitz(const Matrix& a, const Matrix& s,
                                    double l_min = 1e-12) {
  return {std::max(gram_spectral_norm(s), l_min),
          std::max(gram_spectral_norm(a.transpose()), l_min)};
}

inline double multiband_loss(const Matrix& a, const Matrix& s, const Matrix& y,
                             const Vector& sigma) {
  detail::check_factor_shapes(a, s, y, "multiband_loss");
  detail::check_band_sigma(y, sigma, "multiband_loss");
  Matrix r = a * s - y;
  for (Index l = 0; l < r.rows(); ++l) r.row(l) /= sigma(l);
  return 0.5 * r.squaredNorm();
}

inline BlockGradients multiband_grads(const Matrix& a, const Matrix& s,
                                      const Matrix& y, const Vector& sigma) {
  detail::check_factor_shapes(a, s, y, "multiband_grads");
  detail::check_band_sigma(y, sigma, "multiband_grads");
  Matrix r = a * s - y;  // weighted residual, row l scaled by sigma_l^-2
  for (Index l = 0; l < r.rows(); ++l) r.row(l) /= sigma(l) * sigma(l);
  return {r * s.transpose(), a.transpose() * r};
}

// Rows of A decouple in the loss, so the block bound for A is the worst
// per-band constant max_l σ_l⁻²·‖S Sᵀ‖_s; for S the bands couple through
// ‖Σ_l σ_l⁻² A_lᵀ A_l‖_s, the Gram of the row-whitened A.
inline BlockLipschitz multiband_lipschitz(const Matrix& a, const Matrix& s,
                                          const Vector& sigma,
                                          double l_min = 1e-12) {
  detail::check_band_sigma(Matrix::Zero(a.rows(), 1), sigma,
                           "multiband_lipschitz");
  Matrix a_whitened = a;
  double w_max = 0.0;
  for (Index l = 0; l < a.rows(); ++l) {
    a_whitened.row(l) /= sigma(l);
    w_max = std::max(w_max, 1.0 / (sigma(l) * sigma(l)));
  }
  const double l_a = w_max * gram_spectral_norm(s);
  const double l_s = gram_spectral_norm(a_whitened.transpose());
  return {std::max(l_a, l_min), std::max(l_s, l_min)};
}

// Blocks: [0] = A, [1] = S.
class NmfProblem : public Problem {
 public:
  NmfProblem(Matrix y, Index components)
      : y_(std::move(y)), components_(components) {
    if (components_ < 1) {
      throw std::invalid_argument("NmfProblem: need at least one component");
    }
    if (!y_.allFinite()) {
      throw std::invalid_argument("NmfProblem: Y must be finite");
    }
  }

  double loss(const std::vector<ParameterBlock>& b) const override {
    return nmf_loss(b[0].values, b[1].values, y_);
  }

  Matrix gradient(const std::vector<ParameterBlock>& b,
                  std::size_t index) const override {
    const Matrix& a = b[0].values;
    const Matrix& s = b[1].values;
    detail::check_factor_shapes(a, s, y_, "NmfProblem");
    const Matrix r = a * s - y_;
    return index == 0 ? Matrix(r * s.transpose()) : Matrix(a.transpose() * r);
  }

  std::vector<Matrix> gradients(
      const std::vector<ParameterBlock>& b) const override {
    BlockGradients g = nmf_grads(b[0].values, b[1].values, y_);
    std::vector<Matrix> out;
    out.reserve(2);
    out.push_back(std::move(g.a));
    out.push_back(std::move(g.s));
    return out;
  }

  double lipschitz(const std::vector<ParameterBlock>& b,
                   std::size_t index) const override {
    return index == 0
               ? std::max(gram_spectral_norm(b[1].values), 1e-12)
               : std::max(gram_spectral_norm(b[0].values.transpose()), 1e-12);
  }

  const Matrix& data() const { return y_; }
  Index components() const { return components_; }

 private:
  Matrix y_;
  Index components_;
};

// Mixture-model runs share the loss; the row-simplex constraint on A lives
// in that block's prox chain.
using MixMfProblem = NmfProblem;

class MultiBandProblem : public Problem {
 public:
  MultiBandProblem(Matrix y, Vector sigma, Index components, Index height,
                   Index width)
      : y_(std::move(y)),
        sigma_(std::move(sigma)),
        components_(components),
        height_(height),
        width_(width) {
    detail::check_band_sigma(y_, sigma_, "MultiBandProblem");
    if (height_ * width_ != y_.cols()) {
      throw std::invalid_argument(
          "MultiBandProblem: image shape does not match the pixel count");
    }
    if (components_ < 1) {
      throw std::invalid_argument(
          "MultiBandProblem: need at least one component");
    }
  }

  double loss(const std::vector<ParameterBlock>& b) const override {
    return multiband_loss(b[0].values, b[1].values, y_, sigma_);
  }

  Matrix gradient(const std::vector<ParameterBlock>& b,
                  std::size_t index) const override {
    const Matrix& a = b[0].values;
    const Matrix& s = b[1].values;
    detail::check_factor_shapes(a, s, y_, "MultiBandProblem");
    Matrix r = a * s - y_;
    for (Index l = 0; l < r.rows(); ++l) r.row(l) /= sigma_(l) * sigma_(l);
    return index == 0 ? Matrix(r * s.transpose()) : Matrix(a.transpose() * r);
  }

  std::vector<Matrix> gradients(
      const std::vector<ParameterBlock>& b) const override {
    BlockGradients g = multiband_grads(b[0].values, b[1].values, y_, sigma_);
    std::vector<Matrix> out;
    out.reserve(2);
    out.push_back(std::move(g.a));
    out.push_back(std::move(g.s));
    return out;
  }

  double lipschitz(const std::vector<ParameterBlock>& b,
                   std::size_t index) const override {
    return index == 0 ? multiband_lipschitz_a(b[1].values)
                      : multiband_lipschitz_s(b[0].values);
  }

  const Matrix& data() const { return y_; }
  const Vector& band_sigma() const { return sigma_; }
  Index components() const { return components_; }
  Index height() const { return height_; }
  Index width() const { return width_; }

 private:
  double multiband_lipschitz_a(const Matrix& s) const {
    double w_max = 0.0;
    for (Index l = 0; l < sigma_.size(); ++l) {
      w_max = std::max(w_max, 1.0 / (sigma_(l) * sigma_(l)));
    }
    return std::max(w_max * gram_spectral_norm(s), 1e-12);
  }

  double multiband_lipschitz_s(const Matrix& a) const {
    Matrix a_whitened = a;
    for (Index l = 0; l < a.rows(); ++l) a_whitened.row(l) /= sigma_(l);
    return std::max(gram_spectral_norm(a_whitened.transpose()), 1e-12);
  }

  Matrix y_;
  Vector sigma_;
  Index components_;
  Index height_;
  Index width_;
};

struct AstroStepSizes {
  StepSchedule a;
  StepSchedule s;
};

// Per-component steps for the amplitude block: column k of A moves at
// (alpha_rel_a/C)·Σ_c A_ck, i.e. a fixed fraction of the initial amplitude
// estimate. The component block S, being unity-normalized, gets one small
// constant step. A column that initializes to zero would freeze; its step is
// floored at 1e-12 and the event logged rather than aborting the run.
inline AstroStepSizes astro_step_sizes(const Matrix& a_init,
                                       double alpha_rel_a = 0.1,
                                       double alpha_s = 1e-5) {
  if (!(alpha_rel_a > 0.0) || !(alpha_s > 0.0)) {
    throw std::invalid_argument("astro_step_sizes: step factors must be > 0");
  }
  if ((a_init.array() < 0.0).any()) {
    throw std::invalid_argument("astro_step_sizes: A_init must be non-negative");
  }
  StepSchedule a;
  a.kind = StepSchedule::Kind::Constant;
  a.alpha = alpha_rel_a;
  a.scale.resize(a_init.rows(), a_init.cols());
  const double scale_floor = 1e-12 / alpha_rel_a;  // step floor of 1e-12
  for (Index k = 0; k < a_init.cols(); ++k) {
    double mean = a_init.col(k).mean();
    if (!(mean > scale_floor)) {
      warn("astro_step_sizes: column " + std::to_string(k) +
           " has (near-)zero amplitude; flooring its step at 1e-12");
      mean = scale_floor;
    }
    a.scale.col(k).setConstant(mean);
  }
  StepSchedule s;
  s.kind = StepSchedule::Kind::Constant;
  s.alpha = alpha_s;
  return {std::move(a), std::move(s)};
}

}  // namespace adaprox
