#include "foreg/eigenbasis.hpp"

#include <cmath>

#include "foreg/error.hpp"

namespace foreg {

Index default_rank(const Vector& eigenvalues_desc, double energy) {
  const double total = eigenvalues_desc.sum();
  if (!(total > 0.0)) return eigenvalues_desc.size();
  double acc = 0.0;
  for (Index j = 0; j < eigenvalues_desc.size(); ++j) {
    acc += eigenvalues_desc[j];
    if (acc >= energy * total) return j + 1;
  }
  return eigenvalues_desc.size();
}

EigenBasis build_eigenbasis(const Matrix& ktheta, GridPtr grid, std::optional<Index> rank,
                            std::optional<ScalarKernel> kernel) {
  if (!grid) throw ValidationError("build_eigenbasis: null grid");
  const Index m = grid->size();
  if (ktheta.rows() != m || ktheta.cols() != m) throw ValidationError("build_eigenbasis: Gram/grid size mismatch");
  if (rank && (*rank < 1 || *rank > m)) throw ValidationError("build_eigenbasis: rank must be in [1, m]");

  const Vector sqrt_w = grid->weights().cwiseSqrt();
  const Matrix scaled = sqrt_w.asDiagonal() * ktheta * sqrt_w.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (scaled + scaled.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("build_eigenbasis: eigensolver failed");

  // ascending -> descending
  const Vector evals = es.eigenvalues().reverse();
  const Matrix evecs = es.eigenvectors().rowwise().reverse();

  const double top = evals.size() > 0 ? evals[0] : 0.0;
  Index positive = 0;
  while (positive < evals.size() && evals[positive] > 1e-12 * top && evals[positive] > 0.0) ++positive;
  if (positive == 0) throw NumericalError("build_eigenbasis: Gram matrix has no positive eigenvalue");

  const Index wanted = rank ? *rank : default_rank(evals.head(positive));
  const Index r = std::min(wanted, positive);

  EigenBasis basis;
  basis.grid = std::move(grid);
  basis.eigenvalues = evals.head(r);
  basis.psi = sqrt_w.cwiseInverse().asDiagonal() * evecs.leftCols(r);
  basis.gram_theta = ktheta;
  basis.kernel = std::move(kernel);
  basis.truncated = wanted > positive;
  basis.requested_rank = wanted;

  for (Index j = 0; j < r; ++j) {
    auto col = basis.psi.col(j);
    const double scale = col.cwiseAbs().maxCoeff();
    for (Index i = 0; i < m; ++i) {
      if (std::abs(col[i]) > 1e-12 * scale) {
        if (col[i] < 0.0) col = -col;
        break;
      }
    }
  }
  return basis;
}

EigenBasis build_eigenbasis(const ScalarKernel& ktheta, GridPtr grid, std::optional<Index> rank) {
  Matrix g = gram(ktheta, grid->locations());
  return build_eigenbasis(g, std::move(grid), rank, ktheta);
}

double extend_eigenfunction(const EigenBasis& basis, Index j, double theta) {
  if (j < 0 || j >= basis.rank()) throw ValidationError("extend_eigenfunction: index out of range");
  if (!basis.kernel) throw ValidationError("extend_eigenfunction: basis was built without a kernel");
  const Vector& loc = basis.grid->locations();
  const Vector& w = basis.grid->weights();
  double acc = 0.0;
  for (Index i = 0; i < loc.size(); ++i) acc += w[i] * (*basis.kernel)(theta, loc[i]) * basis.psi(i, j);
  return acc / basis.eigenvalues[j];
}

Matrix extend_eigenfunctions(const EigenBasis& basis, const Vector& thetas) {
  if (!basis.kernel) throw ValidationError("extend_eigenfunctions: basis was built without a kernel");
  const Matrix k = cross_gram(*basis.kernel, thetas, basis.grid->locations());
  return k * basis.grid->weights().asDiagonal() * basis.psi * basis.eigenvalues.cwiseInverse().asDiagonal();
}

Matrix project_data(const EigenBasis& basis, const Matrix& y) {
  if (y.cols() != basis.grid->size()) throw ValidationError("project_data: data/grid size mismatch");
  return y * basis.grid->weights().asDiagonal() * basis.psi;
}

Matrix project_data(const EigenBasis& basis, const std::vector<DiscretizedFunction>& ys) {
  Matrix y(static_cast<Index>(ys.size()), basis.grid->size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!(ys[i].grid() == basis.grid || *ys[i].grid() == *basis.grid))
      throw ValidationError("project_data: function grid differs from basis grid");
    y.row(static_cast<Index>(i)) = ys[i].values().transpose();
  }
  return project_data(basis, y);
}

}  // namespace foreg
