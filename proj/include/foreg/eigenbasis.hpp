#pragma once

#include <optional>
#include <vector>

#include "foreg/funcspace.hpp"
#include "foreg/kernels.hpp"

namespace foreg {

/// Approximate eigensystem of the integral operator of k_Theta built from
/// its Gram matrix on a grid (Nystrom). Eigenvalues are operator-scale and
/// eigenfunction columns are orthonormal under the grid's quadrature.
struct EigenBasis {
  GridPtr grid;
  Vector eigenvalues;  // delta_1 >= ... >= delta_r > 0
  Matrix psi;          // m x r, psi(i, j) = psi_j(theta_i)
  Matrix gram_theta;   // source K_Theta, m x m
  std::optional<ScalarKernel> kernel;
  /// Set when fewer pairs than requested were numerically positive.
  bool truncated = false;
  Index requested_rank = 0;

  Index rank() const { return eigenvalues.size(); }
};

/// Smallest rank capturing `energy` of the total eigenvalue mass.
Index default_rank(const Vector& eigenvalues_desc, double energy = 0.999);

/// Eigendecomposition of W^1/2 K W^1/2 (W = quadrature weights). With
/// uniform weights this is K / m, so delta_j = (Gram eigenvalue) / m and
/// psi_j = sqrt(m) * (unit eigenvector). Pairs below 1e-12 * max are dropped.
/// `rank` empty selects default_rank(). The kernel is only needed for
/// off-grid extension.
EigenBasis build_eigenbasis(const Matrix& ktheta, GridPtr grid, std::optional<Index> rank,
                            std::optional<ScalarKernel> kernel = std::nullopt);

EigenBasis build_eigenbasis(const ScalarKernel& ktheta, GridPtr grid, std::optional<Index> rank);

/// psi_j(theta) = 1/delta_j sum_i w_i k(theta, theta_i) psi_j(theta_i).
double extend_eigenfunction(const EigenBasis& basis, Index j, double theta);

/// L x r matrix of all eigenfunctions at the given locations.
Matrix extend_eigenfunctions(const EigenBasis& basis, const Vector& thetas);

/// R_ij = <y_i, psi_j> under quadrature; rows of `y` are sampled outputs.
Matrix project_data(const EigenBasis& basis, const Matrix& y);
Matrix project_data(const EigenBasis& basis, const std::vector<DiscretizedFunction>& ys);

}  // namespace foreg
