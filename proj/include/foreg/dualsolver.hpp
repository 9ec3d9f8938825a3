#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "foreg/loss.hpp"
#include "foreg/types.hpp"

namespace foreg {

enum class Representation { Spline, Eigen };

std::string to_string(Representation r);

/// Discretized dual problem.
///
/// Spline representation (A is n x m, entries are values at the anchors):
///   1/(2m) Tr(AA^T) - 1/m Tr(AY^T) + 1/(2 lambda n m^2) Tr(Kx A Ktheta A^T)
/// Eigen representation (A is n x r, coefficients on the eigenbasis):
///   1/2 Tr(AA^T) - Tr(AR^T) + 1/(2 lambda n) Tr(Kx A Delta A^T)
/// plus the loss-dependent nonsmooth part (row constraint or row penalty).
///
/// The solver works in a metric where the spline objective is multiplied
/// by m (see metric_scale()), which makes the gradient
///   V + 1/(lambda n m) Kx V Ktheta - Y.
class DualProblem {
 public:
  static DualProblem spline(Matrix kx, Matrix ktheta, Matrix y, double lambda, LossSpec loss);
  static DualProblem eigen(Matrix kx, Vector delta, Matrix r, double lambda, LossSpec loss);

  Representation representation() const { return rep_; }
  Index rows() const { return target_.rows(); }
  Index cols() const { return target_.cols(); }
  double lambda() const { return lambda_; }
  const LossSpec& loss() const { return loss_; }
  const Matrix& kx() const { return kx_; }
  /// Ktheta for splines; empty for the eigen representation.
  const Matrix& ktheta() const { return ktheta_; }
  /// Eigenvalues Delta for the eigen representation; empty for splines.
  const Vector& delta() const { return delta_; }
  /// Y (spline) or R (eigen).
  const Matrix& target() const { return target_; }

  /// Coupling constant c in  grad = V + c * Kx V M - target.
  double coupling() const;

  /// Kx A Ktheta (spline) or Kx A Delta (eigen).
  Matrix couple(const Matrix& a) const;

 private:
  DualProblem() = default;
  Representation rep_ = Representation::Spline;
  Matrix kx_;
  Matrix ktheta_;
  Vector delta_;
  Matrix target_;
  double lambda_ = 1.0;
  LossSpec loss_;
};

/// m for the spline representation, 1 for the eigen representation.
double metric_scale(const DualProblem& problem);

struct DualObjectiveParts {
  double smooth = 0.0;     // quadratic part, reported scale
  double nonsmooth = 0.0;  // epsilon row penalty, reported scale
  bool feasible = true;    // Huber row constraints
};

DualObjectiveParts dual_objective_parts(const DualProblem& problem, const Matrix& a);

/// Full dual objective in the reported scale; +inf when a Huber row
/// constraint is violated by more than a relative 1e-9.
double dual_objective(const DualProblem& problem, const Matrix& a);

/// Gradient of the smooth part in the solver metric.
Matrix dual_gradient(const DualProblem& problem, const Matrix& v);

/// Row-wise projection (Huber) or proximal (eps-insensitive) update for step
/// gamma; identity for the square loss.
Matrix prox_or_project_step(const DualProblem& problem, const Matrix& u, double gamma);

/// 1 / C with C = 1 + c ||Kx||_op ||M||_op the Lipschitz constant of the
/// gradient in the solver metric.
double lipschitz_step(const DualProblem& problem);

struct WarmStart {
  Matrix a;
  bool ok = true;  // false when the eigensolver failed and A = 0 was used
};

/// Closed-form minimizer of the unconstrained square-loss dual:
///   A + c Kx A M = target
/// through the eigendecompositions of Kx and M.
WarmStart sylvester_warm_start(const DualProblem& problem);

struct FixedStep {
  double gamma;
};
struct LipschitzStep {};
struct BacktrackingStep {
  double shrink = 0.5;
  /// Initial step; empty means twice the Lipschitz step.
  std::optional<double> initial;
};
using StepRule = std::variant<FixedStep, LipschitzStep, BacktrackingStep>;

std::string to_string(const StepRule& rule);

enum class WarmStartKind { Zero, Sylvester };

struct SolverConfig {
  Index max_iters = 20000;
  /// Stop when the relative objective decrease over `window` iterations
  /// falls below this value. Zero disables the test, leaving only the
  /// fixed-point criterion and max_iters.
  double tolerance = 1e-8;
  Index window = 5;
  /// Stop when ||A_next - A|| <= fixed_point_tolerance * max(1, ||A||).
  double fixed_point_tolerance = 1e-13;
  StepRule step = LipschitzStep{};
  bool restart = true;
  WarmStartKind warm_start = WarmStartKind::Sylvester;
  bool record_trace = true;

  void validate() const;
};

struct SolveReport {
  double objective = 0.0;  // reported scale
  Index iterations = 0;
  std::vector<double> trace;  // reported scale, one entry per accepted iterate
  Index restarts = 0;
  bool converged = false;
  bool warm_start_failed = false;
  double final_step = 0.0;
};

/// Accelerated proximal gradient descent with optional function-value
/// restart. The returned coefficients are always the output of a
/// projection/prox step, hence exactly feasible for Huber losses.
std::pair<Matrix, SolveReport> solve(const DualProblem& problem, const SolverConfig& config);

/// Same as solve() but starting from the given coefficients.
std::pair<Matrix, SolveReport> solve_from(const DualProblem& problem, const SolverConfig& config, Matrix start);

}  // namespace foreg
