#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "adaprox/log.hpp"
#include "adaprox/problems.hpp"
#include "adaprox/rng.hpp"

using namespace adaprox;

namespace {

Matrix random_matrix(RandomStream& r, Index rows, Index cols, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = r.uniform(lo, hi);
  return m;
}

struct WarnCapture {
  std::vector<std::string> messages;
  WarnCapture() {
    set_warn_handler([this](const std::string& msg) { messages.push_back(msg); });
  }
  ~WarnCapture() { set_warn_handler({}); }
};

// Central finite differences of `loss` with respect to every element of m,
// where eval(m) recomputes the loss after substituting m.
template <typename Eval>
Matrix fd_gradient(const Matrix& m, Eval eval, double h = 1e-6) {
  Matrix g(m.rows(), m.cols());
  Matrix work = m;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      work(i, j) = m(i, j) + h;
      const double up = eval(work);
      work(i, j) = m(i, j) - h;
      const double down = eval(work);
      work(i, j) = m(i, j);
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

double rel_gap(const Matrix& got, const Matrix& expect) {
  return (got - expect).norm() / std::max(1.0, expect.norm());
}

std::vector<ParameterBlock> two_blocks(Matrix a, Matrix s) {
  ParameterBlock ba, bs;
  ba.name = "A";
  ba.values = std::move(a);
  bs.name = "S";
  bs.values = std::move(s);
  return {std::move(ba), std::move(bs)};
}

}  // namespace

TEST_CASE("factorization loss on a small fixed instance") {
  Matrix a = Matrix::Identity(2, 2);
  Matrix s(2, 2);
  s << 1.0, 2.0, 3.0, 4.0;
  const Matrix y = Matrix::Zero(2, 2);
  // residual is S itself: 1/2 (1+4+9+16) = 15
  REQUIRE(nmf_loss(a, s, y) == 15.0);
}

TEST_CASE("loss and gradients vanish on an exact factorization") {
  RandomStream r(2, "exact");
  const Matrix a = random_matrix(r, 4, 3, 0.0, 1.0);
  const Matrix s = random_matrix(r, 3, 6, 0.0, 1.0);
  const Matrix y = a * s;
  REQUIRE(nmf_loss(a, s, y) == 0.0);
  const BlockGradients g = nmf_grads(a, s, y);
  REQUIRE(g.a.norm() == 0.0);
  REQUIRE(g.s.norm() == 0.0);
}

TEST_CASE("scalar factorization follows the chain rule") {
  const Matrix a = Matrix::Constant(1, 1, 2.0);
  const Matrix s = Matrix::Constant(1, 1, 3.0);
  const Matrix y = Matrix::Constant(1, 1, 1.0);
  // residual 5: loss = 12.5, d/da = 5*3, d/ds = 5*2
  REQUIRE(nmf_loss(a, s, y) == 12.5);
  const BlockGradients g = nmf_grads(a, s, y);
  REQUIRE(g.a(0, 0) == 15.0);
  REQUIRE(g.s(0, 0) == 10.0);
}

TEST_CASE("factorization gradients match finite differences") {
  RandomStream r(4, "fd");
  const Matrix a = random_matrix(r, 3, 2);
  const Matrix s = random_matrix(r, 2, 4);
  const Matrix y = random_matrix(r, 3, 4);
  const BlockGradients g = nmf_grads(a, s, y);
  const Matrix fd_a =
      fd_gradient(a, [&](const Matrix& m) { return nmf_loss(m, s, y); });
  const Matrix fd_s =
      fd_gradient(s, [&](const Matrix& m) { return nmf_loss(a, m, y); });
  REQUIRE(rel_gap(g.a, fd_a) < 1e-5);
  REQUIRE(rel_gap(g.s, fd_s) < 1e-5);
}

TEST_CASE("band-weighted gradients match finite differences") {
  RandomStream r(6, "fdmb");
  const Matrix a = random_matrix(r, 5, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 6, 0.0, 1.0);
  const Matrix y = random_matrix(r, 5, 6, 0.0, 1.0);
  Vector sigma(5);
  sigma << 1.0, 2.0, 0.5, 3.0, 1.5;
  const BlockGradients g = multiband_grads(a, s, y, sigma);
  const Matrix fd_a = fd_gradient(
      a, [&](const Matrix& m) { return multiband_loss(m, s, y, sigma); });
  const Matrix fd_s = fd_gradient(
      s, [&](const Matrix& m) { return multiband_loss(a, m, y, sigma); });
  REQUIRE(rel_gap(g.a, fd_a) < 1e-5);
  REQUIRE(rel_gap(g.s, fd_s) < 1e-5);
}

TEST_CASE("curvature bounds reduce to known closed forms") {
  // S = I: the A-block bound is the unit Gram
  const Matrix s_id = Matrix::Identity(3, 3);
  const Matrix a_any = Matrix::Ones(2, 3);
  const BlockLipschitz l1 = nmf_lipschitz(a_any, s_id);
  REQUIRE(l1.a == Catch::Approx(1.0).epsilon(1e-10));

  // single-component A: the S-block bound is ‖a‖²
  Matrix a_col(3, 1);
  a_col << 1.0, 2.0, 2.0;
  const Matrix s_any = Matrix::Ones(1, 4);
  const BlockLipschitz l2 = nmf_lipschitz(a_col, s_any);
  REQUIRE(l2.s == Catch::Approx(9.0).epsilon(1e-10));
}

TEST_CASE("curvature bounds agree with a dense eigensolver") {
  RandomStream r(8, "lips");
  const Matrix a = random_matrix(r, 5, 3);
  const Matrix s = random_matrix(r, 3, 7);
  const BlockLipschitz l = nmf_lipschitz(a, s);
  Eigen::SelfAdjointEigenSolver<Matrix> es_a(s * s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es_s(a.transpose() * a);
  REQUIRE(l.a == Catch::Approx(es_a.eigenvalues().maxCoeff()).epsilon(1e-6));
  REQUIRE(l.s == Catch::Approx(es_s.eigenvalues().maxCoeff()).epsilon(1e-6));
}

TEST_CASE("gradients are Lipschitz with the advertised constants") {
  RandomStream r(10, "valid");
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a1 = random_matrix(r, 4, 3);
    const Matrix a2 = random_matrix(r, 4, 3);
    const Matrix s = random_matrix(r, 3, 5);
    const Matrix y = random_matrix(r, 4, 5);
    const BlockLipschitz l = nmf_lipschitz(a1, s);
    const double num =
        (nmf_grads(a1, s, y).a - nmf_grads(a2, s, y).a).norm();
    const double den = (a1 - a2).norm();
    REQUIRE(num <= l.a * den * (1.0 + 1e-10));

    const Matrix s1 = random_matrix(r, 3, 5);
    const Matrix s2 = random_matrix(r, 3, 5);
    const double num_s =
        (nmf_grads(a1, s1, y).s - nmf_grads(a1, s2, y).s).norm();
    const double den_s = (s1 - s2).norm();
    REQUIRE(num_s <= l.s * den_s * (1.0 + 1e-10));
  }
}

TEST_CASE("band-weighted bounds agree with the stacked quadratic form") {
  RandomStream r(12, "mbl");
  const Matrix a = random_matrix(r, 4, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 6, 0.0, 1.0);
  Vector sigma(4);
  sigma << 0.5, 1.0, 2.0, 4.0;
  const BlockLipschitz l = multiband_lipschitz(a, s, sigma);

  // S block: Hessian of vec(S) is I ⊗ (Aᵀ W² A) with W = diag(1/σ)
  Matrix aw = a;
  for (Index i = 0; i < 4; ++i) aw.row(i) /= sigma(i);
  Eigen::SelfAdjointEigenSolver<Matrix> es_s(aw.transpose() * aw);
  REQUIRE(l.s == Catch::Approx(es_s.eigenvalues().maxCoeff()).epsilon(1e-6));

  // A block: rows decouple, worst band dominates
  Eigen::SelfAdjointEigenSolver<Matrix> es_a(s * s.transpose());
  const double expect_a = es_a.eigenvalues().maxCoeff() / (0.5 * 0.5);
  REQUIRE(l.a == Catch::Approx(expect_a).epsilon(1e-6));
}

TEST_CASE("unit band weights recover the plain factorization exactly") {
  RandomStream r(14, "unit");
  const Matrix a = random_matrix(r, 3, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 5, 0.0, 1.0);
  const Matrix y = random_matrix(r, 3, 5, 0.0, 1.0);
  const Vector ones = Vector::Ones(3);
  REQUIRE(multiband_loss(a, s, y, ones) == nmf_loss(a, s, y));
  const BlockGradients gm = multiband_grads(a, s, y, ones);
  const BlockGradients gn = nmf_grads(a, s, y);
  REQUIRE(gm.a == gn.a);
  REQUIRE(gm.s == gn.s);
  const BlockLipschitz lm = multiband_lipschitz(a, s, ones);
  const BlockLipschitz ln = nmf_lipschitz(a, s);
  REQUIRE(lm.a == ln.a);
  REQUIRE(lm.s == ln.s);
}

TEST_CASE("doubling one band sigma quarters its loss share") {
  RandomStream r(16, "share");
  const Matrix a = random_matrix(r, 3, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 5, 0.0, 1.0);
  const Matrix y = random_matrix(r, 3, 5, 0.0, 1.0);
  Vector sigma(3);
  sigma << 1.0, 2.0, 3.0;
  const Matrix resid = a * s - y;
  const double share0 = 0.5 * resid.row(0).squaredNorm() / (sigma(0) * sigma(0));
  const double base = multiband_loss(a, s, y, sigma);
  Vector doubled = sigma;
  doubled(0) *= 2.0;
  const double after = multiband_loss(a, s, y, doubled);
  REQUIRE(after == Catch::Approx(base - share0 * 0.75).epsilon(1e-12));
}

TEST_CASE("rescaling every sigma rescales loss, gradients, and bounds") {
  RandomStream r(18, "homog");
  const Matrix a = random_matrix(r, 4, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 6, 0.0, 1.0);
  const Matrix y = random_matrix(r, 4, 6, 0.0, 1.0);
  Vector sigma(4);
  sigma << 0.7, 1.3, 2.1, 0.9;
  const double c = 3.0;
  const Vector scaled = c * sigma;
  REQUIRE(multiband_loss(a, s, y, scaled) ==
          Catch::Approx(multiband_loss(a, s, y, sigma) / (c * c))
              .epsilon(1e-12));
  const BlockGradients g1 = multiband_grads(a, s, y, sigma);
  const BlockGradients g2 = multiband_grads(a, s, y, scaled);
  REQUIRE((g2.a * c * c - g1.a).norm() < 1e-12 * g1.a.norm());
  REQUIRE((g2.s * c * c - g1.s).norm() < 1e-12 * g1.s.norm());
  const BlockLipschitz l1 = multiband_lipschitz(a, s, sigma);
  const BlockLipschitz l2 = multiband_lipschitz(a, s, scaled);
  REQUIRE(l2.a == Catch::Approx(l1.a / (c * c)).epsilon(1e-9));
  REQUIRE(l2.s == Catch::Approx(l1.s / (c * c)).epsilon(1e-9));
}

TEST_CASE("problem classes agree with the free functions") {
  RandomStream r(20, "cls");
  const Matrix a = random_matrix(r, 3, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 4, 0.0, 1.0);
  const Matrix y = random_matrix(r, 3, 4, 0.0, 1.0);
  const NmfProblem problem(y, 2);
  const std::vector<ParameterBlock> blocks = two_blocks(a, s);
  REQUIRE(problem.loss(blocks) == nmf_loss(a, s, y));
  const BlockGradients g = nmf_grads(a, s, y);
  REQUIRE(problem.gradient(blocks, 0) == g.a);
  REQUIRE(problem.gradient(blocks, 1) == g.s);
  const BlockLipschitz l = nmf_lipschitz(a, s);
  REQUIRE(problem.lipschitz(blocks, 0) == l.a);
  REQUIRE(problem.lipschitz(blocks, 1) == l.s);
  REQUIRE(problem.components() == 2);
  REQUIRE(problem.data() == y);
}

TEST_CASE("joint gradients equal the per-block gradients bit for bit") {
  RandomStream r(22, "joint");
  const Matrix a = random_matrix(r, 3, 2, 0.0, 1.0);
  const Matrix s = random_matrix(r, 2, 4, 0.0, 1.0);
  const Matrix y = random_matrix(r, 3, 4, 0.0, 1.0);
  const std::vector<ParameterBlock> blocks = two_blocks(a, s);

  const NmfProblem nmf(y, 2);
  const std::vector<Matrix> gj = nmf.gradients(blocks);
  REQUIRE(gj.size() == 2);
  REQUIRE(gj[0] == nmf.gradient(blocks, 0));
  REQUIRE(gj[1] == nmf.gradient(blocks, 1));

  Vector sigma(3);
  sigma << 1.0, 2.0, 0.5;
  const MultiBandProblem mb(y, sigma, 2, 2, 2);
  const std::vector<Matrix> gm = mb.gradients(blocks);
  REQUIRE(gm.size() == 2);
  REQUIRE(gm[0] == mb.gradient(blocks, 0));
  REQUIRE(gm[1] == mb.gradient(blocks, 1));
}

TEST_CASE("shape and argument validation") {
  const Matrix a = Matrix::Ones(3, 2);
  const Matrix s = Matrix::Ones(2, 4);
  const Matrix y = Matrix::Ones(3, 4);
  REQUIRE_THROWS_AS(nmf_loss(a, Matrix::Ones(3, 4), y), std::invalid_argument);
  REQUIRE_THROWS_AS(nmf_grads(a, s, Matrix::Ones(2, 4)), std::invalid_argument);

  Vector bad_len(2);
  bad_len << 1.0, 1.0;
  REQUIRE_THROWS_AS(multiband_loss(a, s, y, bad_len), std::invalid_argument);
  Vector neg(3);
  neg << 1.0, -1.0, 1.0;
  REQUIRE_THROWS_AS(multiband_loss(a, s, y, neg), std::invalid_argument);

  REQUIRE_THROWS_AS(NmfProblem(y, 0), std::invalid_argument);
  Matrix bad_y = y;
  bad_y(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(NmfProblem(bad_y, 2), std::invalid_argument);

  Vector sigma(3);
  sigma << 1.0, 1.0, 1.0;
  REQUIRE_THROWS_AS(MultiBandProblem(y, sigma, 2, 3, 3),  // 9 != 4 pixels
                    std::invalid_argument);
  REQUIRE_THROWS_AS(MultiBandProblem(y, sigma, 0, 2, 2),
                    std::invalid_argument);
  REQUIRE_NOTHROW(MultiBandProblem(y, sigma, 2, 2, 2));
}

TEST_CASE("amplitude step sizes follow the initial column means") {
  Matrix a_init(5, 2);
  a_init.col(0).setConstant(1.0);
  a_init.col(1) << 0.0, 0.5, 1.0, 1.5, 2.0;  // mean 1.0
  const AstroStepSizes steps = astro_step_sizes(a_init);
  REQUIRE(steps.a.alpha == 0.1);
  REQUIRE(steps.a.has_scale());
  REQUIRE(steps.a.scale.rows() == 5);
  REQUIRE(steps.a.scale.cols() == 2);
  // every row of a column carries that column's mean amplitude
  REQUIRE(steps.a.scale(0, 0) == 1.0);
  REQUIRE(steps.a.scale(4, 0) == 1.0);
  REQUIRE(steps.a.scale(2, 1) == Catch::Approx(1.0).epsilon(1e-15));
  REQUIRE_FALSE(steps.s.has_scale());
  REQUIRE(steps.s.alpha == 1e-5);
}

TEST_CASE("a zero amplitude column gets the floor step and a warning") {
  WarnCapture capture;
  Matrix a_init = Matrix::Zero(4, 1);
  const AstroStepSizes steps = astro_step_sizes(a_init);
  REQUIRE(capture.messages.size() == 1);
  // alpha * scale floors at 1e-12
  REQUIRE(steps.a.alpha * steps.a.scale(0, 0) ==
          Catch::Approx(1e-12).epsilon(1e-12));
}

TEST_CASE("amplitude step sizing validates its inputs") {
  Matrix neg(2, 1);
  neg << 1.0, -0.1;
  REQUIRE_THROWS_AS(astro_step_sizes(neg), std::invalid_argument);
  const Matrix ok = Matrix::Ones(2, 1);
  REQUIRE_THROWS_AS(astro_step_sizes(ok, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(astro_step_sizes(ok, 0.1, 0.0), std::invalid_argument);
}
