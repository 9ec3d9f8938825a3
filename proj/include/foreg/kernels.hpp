#pragma once

#include <string>
#include <variant>

#include "foreg/types.hpp"

namespace foreg {

/// exp(-rho ||a - b||^2)
struct GaussianKernel {
  double rho;
};

/// exp(-rho ||a - b||)
struct LaplacianKernel {
  double rho;
};

/// Integral Gaussian kernel over sequences of coefficient vectors
/// (e.g. standardized MFCC frames). An input is a length x coefficients
/// matrix flattened row-major:
///   k(a, b) = 1/L sum_j exp(-rho sum_v (a_jv - b_jv)^2)
struct IntegralGaussianKernel {
  double rho;
  Index coefficients = 13;
};

/// Real-valued kernel used either on inputs or on output locations.
class ScalarKernel {
 public:
  using Variant = std::variant<GaussianKernel, LaplacianKernel, IntegralGaussianKernel>;

  ScalarKernel(Variant v);  // NOLINT(google-explicit-constructor)

  static ScalarKernel gaussian(double rho) { return ScalarKernel(GaussianKernel{rho}); }
  static ScalarKernel laplacian(double rho) { return ScalarKernel(LaplacianKernel{rho}); }
  static ScalarKernel integral_gaussian(double rho, Index coefficients = 13) {
    return ScalarKernel(IntegralGaussianKernel{rho, coefficients});
  }

  double operator()(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const;

  /// Kernel on scalar locations.
  double operator()(double a, double b) const;

  const Variant& variant() const { return v_; }
  double rho() const;
  std::string name() const;

 private:
  Variant v_;
};

/// Gram matrix over the rows of `points`.
Matrix gram(const ScalarKernel& k, const Matrix& points);

/// Gram matrix over scalar locations.
Matrix gram(const ScalarKernel& k, const Vector& locations);

/// Rectangular cross-kernel matrix C_ij = k(a_i, b_j) over rows.
Matrix cross_gram(const ScalarKernel& k, const Matrix& a, const Matrix& b);
Matrix cross_gram(const ScalarKernel& k, const Vector& a, const Vector& b);

/// Largest eigenvalue magnitude of a symmetric matrix.
double operator_norm(const Matrix& g);

struct GramPair {
  Matrix kx;
  Matrix ktheta;
};

/// Symmetric to 1e-12 and min eigenvalue >= -tol * max eigenvalue.
bool is_symmetric_psd(const Matrix& g, double tol = 1e-8);

}  // namespace foreg
