#include "foreg/dualsolver.hpp"

#include <cmath>
#include <limits>

#include "foreg/error.hpp"
#include "foreg/funcspace.hpp"
#include "foreg/kernels.hpp"

namespace foreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasibilitySlack = 1e-9;

void check_supported(Representation rep, const LossSpec& loss) {
  if (rep != Representation::Eigen) return;
  if (const auto* h = std::get_if<HuberLoss>(&loss); h && h->p.value() != 2.0)
    throw UnsupportedError("eigen representation only supports the Huber loss with p = 2");
  if (const auto* e = std::get_if<EpsInsensitiveLoss>(&loss); e && e->p.is_infinite())
    throw UnsupportedError("eigen representation only supports the eps-insensitive loss with p = 2");
}

void check_loss_parameters(const LossSpec& loss) {
  if (const auto* h = std::get_if<HuberLoss>(&loss)) {
    if (!(h->kappa > 0.0)) throw ValidationError("Huber kappa must be positive");
    if (h->p.value() != 1.0 && h->p.value() != 2.0) throw UnsupportedError("Huber p must be 1 or 2");
  }
  if (const auto* e = std::get_if<EpsInsensitiveLoss>(&loss)) {
    if (!(e->epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
    if (!(e->p.value() == 2.0 || e->p.is_infinite())) throw UnsupportedError("eps-insensitive p must be 2 or inf");
  }
}

double frob_dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

/// Radius of the Huber row constraint (Euclidean vector q-norm of a row).
double huber_row_radius(const DualProblem& p, const HuberLoss& h) {
  if (p.representation() == Representation::Eigen) return h.kappa;
  const double m = static_cast<double>(p.cols());
  return h.p.value() == 2.0 ? std::sqrt(m) * h.kappa : h.kappa;  // m^(1/q) kappa, q = conj(p)
}

/// Weight in front of sum_i ||a_i||_q in the solver metric.
double eps_row_weight(const DualProblem& p, const EpsInsensitiveLoss& e) {
  if (p.representation() == Representation::Eigen) return e.epsilon;
  const double m = static_cast<double>(p.cols());
  return e.p.is_infinite() ? e.epsilon / m : e.epsilon / std::sqrt(m);  // eps / m^(1/q)
}

/// Nonsmooth part in the solver metric (+inf when infeasible).
double nonsmooth_metric(const DualProblem& p, const Matrix& a) {
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, SquareLoss>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, HuberLoss>) {
          const double radius = huber_row_radius(p, l) * (1.0 + kFeasibilitySlack);
          for (Index i = 0; i < a.rows(); ++i) {
            const double norm = l.p.value() == 2.0 ? a.row(i).norm() : a.row(i).cwiseAbs().maxCoeff();
            if (norm > radius) return kInf;
          }
          return 0.0;
        } else {
          if (l.epsilon == 0.0) return 0.0;
          const double w = eps_row_weight(p, l);
          double acc = 0.0;
          for (Index i = 0; i < a.rows(); ++i)
            acc += l.p.is_infinite() ? a.row(i).cwiseAbs().sum() : a.row(i).norm();
          return w * acc;
        }
      },
      p.loss());
}

double smooth_metric(const DualProblem& p, const Matrix& a, const Matrix& coupled) {
  return 0.5 * a.squaredNorm() - frob_dot(a, p.target()) + 0.5 * p.coupling() * frob_dot(a, coupled);
}

Matrix gradient_from(const DualProblem& p, const Matrix& v, const Matrix& coupled) {
  return v + p.coupling() * coupled - p.target();
}

double step_for(const DualProblem& p, const StepRule& rule) {
  return std::visit(
      [&](const auto& r) -> double {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, FixedStep>) return r.gamma;
        else if constexpr (std::is_same_v<T, LipschitzStep>) return lipschitz_step(p);
        else return r.initial ? *r.initial : 2.0 * lipschitz_step(p);
      },
      rule);
}

}  // namespace

std::string to_string(Representation r) { return r == Representation::Spline ? "spline" : "eigen"; }

std::string to_string(const StepRule& rule) {
  return std::visit(
      [](const auto& r) -> std::string {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, FixedStep>) return "fixed(gamma=" + std::to_string(r.gamma) + ")";
        else if constexpr (std::is_same_v<T, LipschitzStep>) return "lipschitz";
        else return "backtracking";
      },
      rule);
}

DualProblem DualProblem::spline(Matrix kx, Matrix ktheta, Matrix y, double lambda, LossSpec loss) {
  if (!(lambda > 0.0)) throw ValidationError("DualProblem: lambda must be positive");
  const Index n = y.rows();
  const Index m = y.cols();
  if (n < 1 || m < 1) throw ValidationError("DualProblem: empty data matrix");
  if (kx.rows() != n || kx.cols() != n) throw ValidationError("DualProblem: Kx must be n x n");
  if (ktheta.rows() != m || ktheta.cols() != m) throw ValidationError("DualProblem: Ktheta must be m x m");
  check_loss_parameters(loss);
  DualProblem p;
  p.rep_ = Representation::Spline;
  p.kx_ = std::move(kx);
  p.ktheta_ = std::move(ktheta);
  p.target_ = std::move(y);
  p.lambda_ = lambda;
  p.loss_ = loss;
  return p;
}

DualProblem DualProblem::eigen(Matrix kx, Vector delta, Matrix r, double lambda, LossSpec loss) {
  if (!(lambda > 0.0)) throw ValidationError("DualProblem: lambda must be positive");
  const Index n = r.rows();
  if (n < 1 || r.cols() < 1) throw ValidationError("DualProblem: empty data matrix");
  if (kx.rows() != n || kx.cols() != n) throw ValidationError("DualProblem: Kx must be n x n");
  if (delta.size() != r.cols()) throw ValidationError("DualProblem: Delta must have r entries");
  check_loss_parameters(loss);
  check_supported(Representation::Eigen, loss);
  DualProblem p;
  p.rep_ = Representation::Eigen;
  p.kx_ = std::move(kx);
  p.delta_ = std::move(delta);
  p.target_ = std::move(r);
  p.lambda_ = lambda;
  p.loss_ = loss;
  return p;
}

double DualProblem::coupling() const {
  const double n = static_cast<double>(rows());
  if (rep_ == Representation::Spline) return 1.0 / (lambda_ * n * static_cast<double>(cols()));
  return 1.0 / (lambda_ * n);
}

Matrix DualProblem::couple(const Matrix& a) const {
  if (rep_ == Representation::Spline) return kx_ * a * ktheta_;
  return kx_ * a * delta_.asDiagonal();
}

double metric_scale(const DualProblem& problem) {
  return problem.representation() == Representation::Spline ? static_cast<double>(problem.cols()) : 1.0;
}

DualObjectiveParts dual_objective_parts(const DualProblem& problem, const Matrix& a) {
  if (a.rows() != problem.rows() || a.cols() != problem.cols())
    throw ValidationError("dual_objective: coefficient shape mismatch");
  const double scale = metric_scale(problem);
  DualObjectiveParts parts;
  parts.smooth = smooth_metric(problem, a, problem.couple(a)) / scale;
  const double ns = nonsmooth_metric(problem, a);
  parts.feasible = std::isfinite(ns);
  parts.nonsmooth = parts.feasible ? ns / scale : 0.0;
  return parts;
}

double dual_objective(const DualProblem& problem, const Matrix& a) {
  const DualObjectiveParts parts = dual_objective_parts(problem, a);
  if (!parts.feasible) return kInf;
  return parts.smooth + parts.nonsmooth;
}

Matrix dual_gradient(const DualProblem& problem, const Matrix& v) {
  if (v.rows() != problem.rows() || v.cols() != problem.cols())
    throw ValidationError("dual_gradient: coefficient shape mismatch");
  return gradient_from(problem, v, problem.couple(v));
}

Matrix prox_or_project_step(const DualProblem& problem, const Matrix& u, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("prox_or_project_step: gamma must be positive");
  check_supported(problem.representation(), problem.loss());
  return std::visit(
      [&](const auto& l) -> Matrix {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, SquareLoss>) {
          return u;
        } else if constexpr (std::is_same_v<T, HuberLoss>) {
          Matrix a = u;
          const double radius = huber_row_radius(problem, l);
          if (l.p.value() == 2.0) {
            for (Index i = 0; i < a.rows(); ++i) {
              const double norm = a.row(i).norm();
              if (norm > radius) a.row(i) *= radius / norm;
            }
          } else {
            a = a.cwiseMax(-radius).cwiseMin(radius);
          }
          return a;
        } else {
          if (l.epsilon == 0.0) return u;
          Matrix a = u;
          const double threshold = gamma * eps_row_weight(problem, l);
          if (l.p.is_infinite()) {
            for (Index i = 0; i < a.rows(); ++i) {
              Vector row = a.row(i).transpose();
              detail::soft_threshold_inplace(row, threshold);
              a.row(i) = row.transpose();
            }
          } else {
            for (Index i = 0; i < a.rows(); ++i) {
              const double norm = a.row(i).norm();
              if (norm <= threshold) a.row(i).setZero();
              else a.row(i) *= 1.0 - threshold / norm;
            }
          }
          return a;
        }
      },
      problem.loss());
}

double lipschitz_step(const DualProblem& problem) {
  const double kx = operator_norm(problem.kx());
  const double other = problem.representation() == Representation::Spline ? operator_norm(problem.ktheta())
                                                                           : problem.delta().cwiseAbs().maxCoeff();
  return 1.0 / (1.0 + problem.coupling() * kx * other);
}

WarmStart sylvester_warm_start(const DualProblem& problem) {
  WarmStart out;
  Eigen::SelfAdjointEigenSolver<Matrix> ex(problem.kx());
  if (ex.info() != Eigen::Success) {
    out.ok = false;
    out.a = Matrix::Zero(problem.rows(), problem.cols());
    return out;
  }
  const Matrix& ux = ex.eigenvectors();
  const Vector& dx = ex.eigenvalues();
  const double c = problem.coupling();

  if (problem.representation() == Representation::Spline) {
    Eigen::SelfAdjointEigenSolver<Matrix> et(problem.ktheta());
    if (et.info() != Eigen::Success) {
      out.ok = false;
      out.a = Matrix::Zero(problem.rows(), problem.cols());
      return out;
    }
    const Matrix& ut = et.eigenvectors();
    const Vector& dt = et.eigenvalues();
    Matrix t = ux.transpose() * problem.target() * ut;
    t.array() /= (1.0 + c * (dx * dt.transpose()).array());
    out.a = ux * t * ut.transpose();
  } else {
    Matrix t = ux.transpose() * problem.target();
    t.array() /= (1.0 + c * (dx * problem.delta().transpose()).array());
    out.a = ux * t;
  }
  return out;
}

void SolverConfig::validate() const {
  if (max_iters < 0) throw ValidationError("solver: max_iters must be >= 0");
  if (!(tolerance >= 0.0)) throw ValidationError("solver: tolerance must be >= 0");
  if (window < 1) throw ValidationError("solver: window must be >= 1");
  if (const auto* f = std::get_if<FixedStep>(&step); f && !(f->gamma > 0.0))
    throw ValidationError("solver: fixed step gamma must be positive");
  if (const auto* b = std::get_if<BacktrackingStep>(&step)) {
    if (!(b->shrink > 0.0 && b->shrink < 1.0)) throw ValidationError("solver: backtracking shrink must be in (0, 1)");
    if (b->initial && !(*b->initial > 0.0)) throw ValidationError("solver: backtracking initial step must be positive");
  }
}

std::pair<Matrix, SolveReport> solve(const DualProblem& problem, const SolverConfig& config) {
  config.validate();
  Matrix start;
  bool warm_failed = false;
  if (config.warm_start == WarmStartKind::Sylvester) {
    WarmStart ws = sylvester_warm_start(problem);
    warm_failed = !ws.ok;
    start = std::move(ws.a);
  } else {
    start = Matrix::Zero(problem.rows(), problem.cols());
  }
  auto result = solve_from(problem, config, std::move(start));
  result.second.warm_start_failed = warm_failed;
  return result;
}

std::pair<Matrix, SolveReport> solve_from(const DualProblem& problem, const SolverConfig& config, Matrix start) {
  config.validate();
  if (start.rows() != problem.rows() || start.cols() != problem.cols())
    throw ValidationError("solve: start shape mismatch");
  check_supported(problem.representation(), problem.loss());

  const double scale = metric_scale(problem);
  const bool backtracking = std::holds_alternative<BacktrackingStep>(config.step);
  const double shrink = backtracking ? std::get<BacktrackingStep>(config.step).shrink : 1.0;
  const double gamma0 = step_for(problem, config.step);
  double gamma = gamma0;

  Matrix a = std::move(start);
  Matrix p_a = problem.couple(a);
  Matrix a_prev = a;
  Matrix p_prev = p_a;
  double f_cur = smooth_metric(problem, a, p_a) + nonsmooth_metric(problem, a);

  SolveReport report;

  // One proximal gradient step from V (with coupled product pv). Returns the
  // new point and its coupled product; adapts gamma under backtracking.
  auto step_from = [&](const Matrix& v, const Matrix& pv) -> std::pair<Matrix, Matrix> {
    const Matrix grad = gradient_from(problem, v, pv);
    const double f_v = backtracking ? smooth_metric(problem, v, pv) : 0.0;
    for (int tries = 0;; ++tries) {
      Matrix u = prox_or_project_step(problem, v - gamma * grad, gamma);
      Matrix pu = problem.couple(u);
      if (!backtracking) return {std::move(u), std::move(pu)};
      const Matrix d = u - v;
      const double bound = f_v + frob_dot(grad, d) + d.squaredNorm() / (2.0 * gamma);
      const double f_u = smooth_metric(problem, u, pu);
      if (f_u <= bound + 1e-12 * std::abs(bound) || tries >= 80) return {std::move(u), std::move(pu)};
      gamma *= shrink;
    }
  };

  Index k = 0;  // momentum counter, reset on restart
  for (Index t = 0; t < config.max_iters; ++t) {
    const double beta = std::max(0.0, (static_cast<double>(k) - 2.0) / (static_cast<double>(k) + 1.0));
    Matrix v = a;
    Matrix pv = p_a;
    if (beta > 0.0) {
      v += beta * (a - a_prev);
      pv += beta * (p_a - p_prev);
    }
    auto [u, pu] = step_from(v, pv);
    double f_new = smooth_metric(problem, u, pu) + nonsmooth_metric(problem, u);

    if (config.restart && beta > 0.0 && f_new > f_cur) {
      ++report.restarts;
      k = 0;
      if (backtracking) gamma = gamma0;
      std::tie(u, pu) = step_from(a, p_a);
      f_new = smooth_metric(problem, u, pu) + nonsmooth_metric(problem, u);
    }
    if (!std::isfinite(f_new)) {
      throw NumericalError("solve: objective diverged under step rule " + to_string(config.step));
    }

    const double change = (u - a).norm();
    const bool fixed_point = change <= config.fixed_point_tolerance * std::max(1.0, a.norm());

    a_prev = std::move(a);
    p_prev = std::move(p_a);
    a = std::move(u);
    p_a = std::move(pu);
    f_cur = f_new;
    ++k;

    if (!(t == 0 && fixed_point)) ++report.iterations;
    if (config.record_trace || report.trace.size() < static_cast<std::size_t>(config.window) + 1) {
      report.trace.push_back(f_cur / scale);
    } else {
      report.trace.erase(report.trace.begin());
      report.trace.push_back(f_cur / scale);
    }

    if (fixed_point) {
      report.converged = true;
      break;
    }
    const std::size_t len = report.trace.size();
    const std::size_t w = static_cast<std::size_t>(config.window);
    if (config.tolerance > 0.0 && len > w) {
      const double drop = std::abs(report.trace[len - 1 - w] - report.trace[len - 1]);
      if (drop <= config.tolerance * std::abs(report.trace[len - 1])) {
        report.converged = true;
        break;
      }
    }
  }

  if (report.trace.empty()) {
    // max_iters == 0: still hand back a feasible point.
    a = prox_or_project_step(problem, a, gamma);
    p_a = problem.couple(a);
    f_cur = smooth_metric(problem, a, p_a) + nonsmooth_metric(problem, a);
    report.trace.push_back(f_cur / scale);
  }
  report.objective = f_cur / scale;
  report.final_step = gamma;
  return {std::move(a), std::move(report)};
}

}  // namespace foreg
