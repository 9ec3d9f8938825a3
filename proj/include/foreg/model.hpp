#pragma once

#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "foreg/dualsolver.hpp"
#include "foreg/eigenbasis.hpp"
#include "foreg/funcspace.hpp"
#include "foreg/kernels.hpp"
#include "foreg/loss.hpp"

namespace foreg {

struct SplineChoice {};
struct EigenChoice {
  /// Empty: smallest rank capturing 99.9% of the eigenvalue mass.
  std::optional<Index> rank;
};
using RepresentationChoice = std::variant<SplineChoice, EigenChoice>;

struct FitOptions {
  ScalarKernel kx = ScalarKernel::gaussian(1.0);
  ScalarKernel ktheta = ScalarKernel::gaussian(1.0);
  double lambda = 1e-3;
  LossSpec loss = SquareLoss{};
  RepresentationChoice representation = SplineChoice{};
  SolverConfig solver;
};

/// Fitted functional output regressor
///   h(x)(theta) = 1/(lambda n) sum_i k_X(x, x_i) (T alpha_i)(theta).
class ForModel {
 public:
  ForModel(ScalarKernel kx, ScalarKernel ktheta, double lambda, LossSpec loss, Matrix train_inputs, GridPtr grid,
           Matrix coefficients, std::optional<EigenBasis> basis, SolveReport report);

  const ScalarKernel& kx() const { return kx_; }
  const ScalarKernel& ktheta() const { return ktheta_; }
  double lambda() const { return lambda_; }
  const LossSpec& loss() const { return loss_; }
  const Matrix& train_inputs() const { return train_inputs_; }
  const GridPtr& grid() const { return grid_; }
  /// n x m (spline) or n x r (eigen).
  const Matrix& coefficients() const { return coefficients_; }
  Representation representation() const { return basis_ ? Representation::Eigen : Representation::Spline; }
  const std::optional<EigenBasis>& basis() const { return basis_; }
  const SolveReport& report() const { return report_; }
  Index n_train() const { return train_inputs_.rows(); }

  /// Same model with coefficients replaced (used for linearity checks).
  ForModel with_coefficients(Matrix coefficients) const;

 private:
  ScalarKernel kx_;
  ScalarKernel ktheta_;
  double lambda_;
  LossSpec loss_;
  Matrix train_inputs_;
  GridPtr grid_;
  Matrix coefficients_;
  std::optional<EigenBasis> basis_;
  SolveReport report_;
};

/// Rows of `inputs` are the n training inputs, rows of `outputs` their
/// samples on `grid` (which also provides the spline anchors).
ForModel fit(const Matrix& inputs, const Matrix& outputs, GridPtr grid, const FitOptions& options);
ForModel fit(const Matrix& inputs, const std::vector<DiscretizedFunction>& outputs, const FitOptions& options);

/// Builds the dual problem fit() would solve, without solving it.
DualProblem assemble_problem(const Matrix& inputs, const Matrix& outputs, const GridPtr& grid, const FitOptions& options,
                             std::optional<EigenBasis>* basis_out = nullptr);

/// Predictions for each row of `inputs` at `locations`: rows x locations.
Matrix predict(const ForModel& model, const Matrix& inputs, const Vector& locations);
/// Predictions on the model's own grid.
Matrix predict(const ForModel& model, const Matrix& inputs);
DiscretizedFunction predict_function(const ForModel& model, const Vector& input);

/// Fraction of dual coefficients that are zero (|a| <= 1e-12). Entrywise
/// for pointwise losses, row-wise for p = 2 losses and the eigen basis.
double dual_sparsity(const ForModel& model);

/// Archive: magic line, JSON manifest, then row-major little-endian float64
/// matrices at the offsets listed in the manifest.
void save_model(const ForModel& model, const std::filesystem::path& path);
ForModel load_model(const std::filesystem::path& path);

}  // namespace foreg
