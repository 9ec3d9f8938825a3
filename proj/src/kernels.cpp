#include "foreg/kernels.hpp"

#include <cmath>

#include "foreg/error.hpp"

namespace foreg {

namespace {

double squared_distance(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  return (a - b).squaredNorm();
}

}  // namespace

ScalarKernel::ScalarKernel(Variant v) : v_(v) {
  if (!(rho() > 0.0)) throw ValidationError("kernel: rho must be positive");
  if (const auto* ig = std::get_if<IntegralGaussianKernel>(&v_); ig && ig->coefficients < 1)
    throw ValidationError("kernel: integral kernel needs at least one coefficient");
}

double ScalarKernel::rho() const {
  return std::visit([](const auto& k) { return k.rho; }, v_);
}

std::string ScalarKernel::name() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GaussianKernel>) return "gaussian";
        else if constexpr (std::is_same_v<T, LaplacianKernel>) return "laplacian";
        else return "integral_gaussian";
      },
      v_);
}

double ScalarKernel::operator()(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
  if (a.size() != b.size()) throw ValidationError("kernel: input dimension mismatch");
  return std::visit(
      [&](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GaussianKernel>) {
          return std::exp(-k.rho * squared_distance(a, b));
        } else if constexpr (std::is_same_v<T, LaplacianKernel>) {
          return std::exp(-k.rho * std::sqrt(squared_distance(a, b)));
        } else {
          const Index v = k.coefficients;
          if (a.size() % v != 0 || a.size() == 0)
            throw ValidationError("kernel: sequence length is not a multiple of the coefficient count");
          const Index frames = a.size() / v;
          double acc = 0.0;
          for (Index j = 0; j < frames; ++j) {
            acc += std::exp(-k.rho * (a.segment(j * v, v) - b.segment(j * v, v)).squaredNorm());
          }
          return acc / static_cast<double>(frames);
        }
      },
      v_);
}

double ScalarKernel::operator()(double a, double b) const {
  const double d = a - b;
  return std::visit(
      [&](const auto& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, LaplacianKernel>) return std::exp(-k.rho * std::abs(d));
        else return std::exp(-k.rho * d * d);  // integral kernel on 1 frame x 1 coefficient
      },
      v_);
}

Matrix gram(const ScalarKernel& k, const Matrix& points) {
  const Index n = points.rows();
  if (n == 0) throw ValidationError("gram: empty point list");
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    g(i, i) = k(points.row(i).transpose(), points.row(i).transpose());
    for (Index j = i + 1; j < n; ++j) {
      const double v = k(points.row(i).transpose(), points.row(j).transpose());
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix gram(const ScalarKernel& k, const Vector& locations) {
  const Index m = locations.size();
  if (m == 0) throw ValidationError("gram: empty point list");
  Matrix g(m, m);
  for (Index i = 0; i < m; ++i) {
    g(i, i) = k(locations[i], locations[i]);
    for (Index j = i + 1; j < m; ++j) {
      const double v = k(locations[i], locations[j]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

Matrix cross_gram(const ScalarKernel& k, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("cross_gram: input dimension mismatch");
  Matrix c(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) c(i, j) = k(a.row(i).transpose(), b.row(j).transpose());
  return c;
}

Matrix cross_gram(const ScalarKernel& k, const Vector& a, const Vector& b) {
  Matrix c(a.size(), b.size());
  for (Index i = 0; i < a.size(); ++i)
    for (Index j = 0; j < b.size(); ++j) c(i, j) = k(a[i], b[j]);
  return c;
}

double operator_norm(const Matrix& g) {
  if (g.rows() != g.cols()) throw ValidationError("operator_norm: matrix must be square");
  if (g.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("operator_norm: eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_symmetric_psd(const Matrix& g, double tol) {
  if (g.rows() != g.cols()) return false;
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo >= -tol * std::max(hi, 0.0);
}

}  // namespace foreg
