#pragma once

#include <memory>

#include "foreg/loss.hpp"
#include "foreg/types.hpp"

namespace foreg {

/// Sampling locations on Theta together with quadrature weights for the
/// probability measure mu. Immutable once built.
class Grid {
 public:
  /// Uniform weights 1/m.
  explicit Grid(Vector locations);
  Grid(Vector locations, Vector weights);

  /// m equispaced points from lo to hi inclusive.
  static Grid linspace(double lo, double hi, Index m);
  // cell centres lo + (j + 1/2) h, h = (hi - lo) / m
  static Grid midpoints(double lo, double hi, Index m);

  Index size() const { return locations_.size(); }
  const Vector& locations() const { return locations_; }
  const Vector& weights() const { return weights_; }
  bool is_uniform() const { return uniform_; }

  friend bool operator==(const Grid& a, const Grid& b);

 private:
  Vector locations_;
  Vector weights_;
  bool uniform_ = true;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(Grid grid) { return std::make_shared<const Grid>(std::move(grid)); }

/// A real function on Theta known through its values on a grid.
class DiscretizedFunction {
 public:
  DiscretizedFunction(GridPtr grid, Vector values);

  static DiscretizedFunction zeros(GridPtr grid);

  const GridPtr& grid() const { return grid_; }
  const Vector& values() const { return values_; }
  Index size() const { return values_.size(); }

  /// Same grid, new values. Skips the finiteness check of the constructor.
  DiscretizedFunction with_values(Vector values) const;

 private:
  GridPtr grid_;
  Vector values_;
};

bool same_grid(const DiscretizedFunction& f, const DiscretizedFunction& g);

/// (sum_j w_j |f_j|^p)^(1/p), or max_j |f_j| for p = inf.
double mc_norm(const DiscretizedFunction& f, PNorm p);

/// sum_j w_j f_j g_j. Throws ValidationError on grid mismatch.
double mc_inner(const DiscretizedFunction& f, const DiscretizedFunction& g);

/// Projection onto the q-ball of the given radius, q in {2, inf}.
DiscretizedFunction project_qball(const DiscretizedFunction& f, PNorm q, double radius);

/// Proximal operator of scale * ||.||_q, q in {1, 2}: pointwise soft
/// thresholding for q = 1 and block soft thresholding for q = 2.
DiscretizedFunction prox_qnorm(const DiscretizedFunction& f, PNorm q, double scale);

/// Primal loss of a residual function:
///   square          1/2 ||f||^2
///   huber(k, p)     1/2 ||P(f)||^2 + k ||f - P(f)||_p,  P = projection on B_k^q
///   eps(e, p)       1/2 ||f - P(f)||^2,                 P = projection on B_e^p
double eval_loss(const DiscretizedFunction& residual, const LossSpec& loss);

namespace detail {

// Raw-vector kernels shared with the solver and the evaluation code.
double weighted_norm(const Eigen::Ref<const Vector>& values, const Eigen::Ref<const Vector>& weights,
                     PNorm p);
void clamp_inplace(Eigen::Ref<Vector> values, double radius);
void soft_threshold_inplace(Eigen::Ref<Vector> values, double threshold);

}  // namespace detail

}  // namespace foreg
