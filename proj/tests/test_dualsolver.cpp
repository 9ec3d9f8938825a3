#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "foreg/dualsolver.hpp"
#include "foreg/error.hpp"
#include "foreg/kernels.hpp"
#include "oracles.hpp"

using namespace foreg;

namespace {

struct Instance {
  Matrix kx;
  Matrix ktheta;
  Matrix y;
};

Instance random_instance(Index n, Index m, std::mt19937_64& rng) {
  const Matrix x = oracle::random_matrix(n, 3, rng);
  const Vector t = Vector::LinSpaced(m, 0, 1);
  return {gram(ScalarKernel::gaussian(0.5), x), gram(ScalarKernel::laplacian(2.0), t), oracle::random_matrix(n, m, rng)};
}

DualProblem spline(const Instance& in, double lambda, LossSpec loss) {
  return DualProblem::spline(in.kx, in.ktheta, in.y, lambda, std::move(loss));
}

DualProblem eigen(const Instance& in, double lambda, LossSpec loss) {
  const Index r = std::min<Index>(in.y.cols(), 4);
  const Vector delta = Vector::LinSpaced(r, 1.0, 0.1);
  return DualProblem::eigen(in.kx, delta, in.y.leftCols(r), lambda, std::move(loss));
}

SolverConfig tight() {
  SolverConfig c;
  c.tolerance = 0.0;
  c.max_iters = 200000;
  c.fixed_point_tolerance = 1e-14;
  return c;
}

}  // namespace

TEST(DualObjective, ZeroIsZero) {
  std::mt19937_64 rng(31);
  const auto in = random_instance(4, 5, rng);
  for (const LossSpec& l : {square_loss(), huber_loss(0.5, 2), huber_loss(0.5, 1), eps_insensitive_loss(0.3, PNorm(2.0)),
                            eps_insensitive_loss(0.3, PNorm::infinity())})
    EXPECT_EQ(dual_objective(spline(in, 0.1, l), Matrix::Zero(4, 5)), 0.0);
  EXPECT_EQ(dual_objective(eigen(in, 0.1, huber_loss(0.5, 2)), Matrix::Zero(4, 4)), 0.0);
}

TEST(DualObjective, DecoupledSquareMinimum) {
  std::mt19937_64 rng(32);
  auto in = random_instance(3, 4, rng);
  in.kx.setZero();
  const auto p = spline(in, 1.0, square_loss());
  EXPECT_NEAR(dual_objective(p, in.y), -in.y.squaredNorm() / (2.0 * 4), 1e-14);
  EXPECT_LE((sylvester_warm_start(p).a - in.y).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(DualObjective, HuberInfeasibleIsInfinite) {
  std::mt19937_64 rng(33);
  const auto in = random_instance(2, 4, rng);
  const double kappa = 0.5;
  Matrix a = Matrix::Zero(2, 4);
  a.row(0).setConstant(kappa * 1.01);  // ||row||_2 = 2 * 1.01 kappa > sqrt(4) kappa
  EXPECT_TRUE(std::isinf(dual_objective(spline(in, 1.0, huber_loss(kappa, 2)), a)));
  EXPECT_TRUE(std::isinf(dual_objective(spline(in, 1.0, huber_loss(kappa, 1)), a)));
  a.row(0).setConstant(kappa);
  EXPECT_TRUE(std::isfinite(dual_objective(spline(in, 1.0, huber_loss(kappa, 2)), a)));
}

TEST(DualGradient, Examples) {
  std::mt19937_64 rng(34);
  auto in = random_instance(3, 4, rng);
  EXPECT_EQ(dual_gradient(spline(in, 0.1, square_loss()), Matrix::Zero(3, 4)), -in.y);
  EXPECT_EQ(dual_gradient(eigen(in, 0.1, square_loss()), Matrix::Zero(3, 4)), -in.y.leftCols(4));

  // Kx = lambda n I and Ktheta = m I: gradient 2A - Y
  const double lambda = 0.2;
  in.kx = lambda * 3 * Matrix::Identity(3, 3);
  in.ktheta = 4 * Matrix::Identity(4, 4);
  const Matrix a = oracle::random_matrix(3, 4, rng);
  EXPECT_LE((dual_gradient(spline(in, lambda, square_loss()), a) - (2 * a - in.y)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(DualGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_instance(2 + trial % 5, 2 + trial % 4, rng);
    for (const auto& p : {spline(in, 0.05, square_loss()), eigen(in, 0.05, square_loss())}) {
      const Matrix a = oracle::random_matrix(p.rows(), p.cols(), rng);
      const auto smooth = [&](const Matrix& x) { return metric_scale(p) * dual_objective_parts(p, x).smooth; };
      const Matrix fd = oracle::central_difference(smooth, a, 1e-5);
      const Matrix g = dual_gradient(p, a);
      EXPECT_LE((fd - g).norm(), 1e-5 * g.norm());
    }
  }
}

TEST(ProxStep, Examples) {
  std::mt19937_64 rng(36);
  const auto in = random_instance(2, 4, rng);
  const Matrix u = oracle::random_matrix(2, 4, rng);
  EXPECT_EQ(prox_or_project_step(spline(in, 1, square_loss()), u, 0.3), u);

  // inside the scaled ball sqrt(m) kappa
  const double kappa = u.rowwise().norm().maxCoeff() / 2.0 + 1e-9;
  EXPECT_EQ(prox_or_project_step(spline(in, 1, huber_loss(kappa, 2)), u, 0.3), u);

  // gamma eps / m = 0.25 with m = 4
  const Matrix ones = Matrix::Ones(2, 4);
  const Matrix got = prox_or_project_step(spline(in, 1, eps_insensitive_loss(1.0, PNorm::infinity())), ones, 1.0);
  EXPECT_LE((got.array() - 0.75).abs().maxCoeff(), 1e-15);
}

TEST(ProxStep, EigenRejectsPointwiseLosses) {
  std::mt19937_64 rng(37);
  const auto in = random_instance(2, 4, rng);
  EXPECT_THROW(eigen(in, 1, huber_loss(1.0, 1)), UnsupportedError);
  EXPECT_THROW(eigen(in, 1, eps_insensitive_loss(1.0, PNorm::infinity())), UnsupportedError);
}

TEST(ProxStep, HuberIteratesAreFeasible) {
  std::mt19937_64 rng(38);
  const auto in = random_instance(5, 6, rng);
  for (double p : {1.0, 2.0}) {
    const double kappa = 0.2;
    const auto prob = spline(in, 0.01, huber_loss(kappa, p));
    const Matrix a = prox_or_project_step(prob, 10 * oracle::random_matrix(5, 6, rng), 0.5);
    if (p == 2.0) EXPECT_LE(a.rowwise().norm().maxCoeff(), std::sqrt(6.0) * kappa * (1 + 1e-12));
    else EXPECT_LE(a.cwiseAbs().maxCoeff(), kappa);
  }
}

TEST(LipschitzStep, Examples) {
  std::mt19937_64 rng(39);
  auto in = random_instance(3, 4, rng);
  const Matrix kx = in.kx;
  in.kx.setZero();
  EXPECT_EQ(lipschitz_step(spline(in, 0.1, square_loss())), 1.0);

  // Kx = I, Ktheta = m I, lambda n = 1
  in.kx = Matrix::Identity(3, 3);
  in.ktheta = 4 * Matrix::Identity(4, 4);
  EXPECT_NEAR(lipschitz_step(spline(in, 1.0 / 3.0, square_loss())), 0.5, 1e-14);

  in.kx = kx;
  EXPECT_LE(lipschitz_step(spline(in, 1e-4, square_loss())), 1.0);
  EXPECT_LE(lipschitz_step(eigen(in, 1e-4, square_loss())), 1.0);
}

TEST(SylvesterWarmStart, SolvesStationarity) {
  std::mt19937_64 rng(40);
  const auto in = random_instance(4, 5, rng);
  for (const auto& p : {spline(in, 0.01, square_loss()), eigen(in, 0.01, square_loss())}) {
    const auto ws = sylvester_warm_start(p);
    ASSERT_TRUE(ws.ok);
    const Matrix residual = ws.a + p.coupling() * p.couple(ws.a) - p.target();
    EXPECT_LE(residual.norm(), 1e-8 * p.target().norm());
  }
  const auto lazy = sylvester_warm_start(spline(in, 1e12, square_loss()));
  EXPECT_LE((lazy.a - in.y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Solve, SquareWarmStartIsImmediate) {
  std::mt19937_64 rng(41);
  const auto in = random_instance(6, 7, rng);
  const auto p = spline(in, 0.01, square_loss());
  const auto [a, rep] = solve(p, SolverConfig{});
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_TRUE(rep.converged);
  EXPECT_NEAR(rep.objective, dual_objective(p, sylvester_warm_start(p).a), 1e-12);
  EXPECT_EQ(rep.trace.back(), rep.objective);
}

TEST(Solve, InactiveConstraintMatchesSquare) {
  std::mt19937_64 rng(42);
  const auto in = random_instance(5, 6, rng);
  const Matrix a_sq = sylvester_warm_start(spline(in, 0.05, square_loss())).a;
  const double m = 6.0;
  const double kappa2 = a_sq.rowwise().norm().maxCoeff() / std::sqrt(m);
  const double kappa1 = a_sq.cwiseAbs().maxCoeff();
  for (const LossSpec& l : {huber_loss(kappa2 * 1.01, 2), huber_loss(kappa1 * 1.01, 1), eps_insensitive_loss(0.0, PNorm(2.0))}) {
    const auto [a, rep] = solve(spline(in, 0.05, l), tight());
    EXPECT_LE((a - a_sq).cwiseAbs().maxCoeff(), 1e-8) << loss_label(l);
  }
}

TEST(Solve, ZeroStartConvergesToClosedForm) {
  std::mt19937_64 rng(43);
  const auto in = random_instance(8, 9, rng);
  for (const auto& p : {spline(in, 0.01, square_loss()), eigen(in, 0.01, square_loss())}) {
    SolverConfig c = tight();
    c.warm_start = WarmStartKind::Zero;
    const auto [a, rep] = solve(p, c);
    const Matrix exact = sylvester_warm_start(p).a;
    EXPECT_LE((a - exact).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(rep.converged);
  }
}

TEST(Solve, TraceNonIncreasingWithRestart) {
  std::mt19937_64 rng(44);
  const auto in = random_instance(10, 8, rng);
  for (const LossSpec& l : {square_loss(), huber_loss(0.3, 2), huber_loss(0.3, 1), eps_insensitive_loss(0.5, PNorm(2.0)),
                            eps_insensitive_loss(0.5, PNorm::infinity())}) {
    for (const StepRule& step : {StepRule{LipschitzStep{}}, StepRule{BacktrackingStep{}}}) {
      SolverConfig c;
      c.warm_start = WarmStartKind::Zero;
      c.step = step;
      const auto [a, rep] = solve(spline(in, 1e-3, l), c);
      for (std::size_t t = 1; t < rep.trace.size(); ++t)
        EXPECT_LE(rep.trace[t], rep.trace[t - 1] + 1e-12 * std::abs(rep.trace[t - 1])) << loss_label(l) << " t=" << t;
      EXPECT_EQ(rep.trace.back(), rep.objective);
    }
  }
}

TEST(Solve, StepRulesAgree) {
  std::mt19937_64 rng(45);
  const auto in = random_instance(6, 5, rng);
  const auto p = spline(in, 1e-2, huber_loss(0.2, 2));
  SolverConfig c = tight();
  c.max_iters = 50000;
  const double ref = solve(p, c).second.objective;
  for (const StepRule& step : {StepRule{FixedStep{0.9 * lipschitz_step(p)}}, StepRule{BacktrackingStep{0.5, 10.0}}}) {
    c.step = step;
    EXPECT_NEAR(solve(p, c).second.objective, ref, 1e-9 * std::abs(ref)) << to_string(step);
  }
}

TEST(Solve, MatchesProximalGradientReference) {
  std::mt19937_64 rng(46);
  for (const LossSpec& l : {huber_loss(0.2, 2), huber_loss(0.2, 1), eps_insensitive_loss(0.4, PNorm(2.0)),
                            eps_insensitive_loss(0.4, PNorm::infinity())}) {
    const auto in = random_instance(3, 4, rng);
    const auto p = spline(in, 0.05, l);
    const Matrix ref = oracle::proximal_gradient_reference(p, 1000000);
    const auto [a, rep] = solve(p, tight());
    EXPECT_NEAR(rep.objective, dual_objective(p, ref), 1e-5) << loss_label(l);
  }
}

TEST(Solve, DivergenceNamesStepRule) {
  std::mt19937_64 rng(47);
  const auto in = random_instance(6, 6, rng);
  SolverConfig c;
  c.step = FixedStep{50.0};
  c.restart = false;
  c.warm_start = WarmStartKind::Zero;
  try {
    solve(spline(in, 1e-4, square_loss()), c);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("fixed"), std::string::npos);
  }
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  c.step = FixedStep{0.0};
  EXPECT_THROW(c.validate(), ValidationError);
  c.step = BacktrackingStep{1.5};
  EXPECT_THROW(c.validate(), ValidationError);
  c.step = LipschitzStep{};
  c.window = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}
