#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "foreg/datagen.hpp"
#include "foreg/model.hpp"

namespace foreg {

/// (1/n) sum_i sum_j (y_ij - yhat_ij)^2 over rows of equal-shaped matrices.
double mse(const Matrix& truth, const Matrix& predictions);
/// mse / m for a common grid of m locations.
double nmse(const Matrix& truth, const Matrix& predictions);
/// Per-sample location lists of varying length.
double mse(const std::vector<Vector>& truth, const std::vector<Vector>& predictions);

/// `count` values from start to stop, equally spaced on a log scale.
struct GeometricGrid {
  double start = 1e-3;
  double stop = 1e-1;
  Index count = 1;

  std::vector<double> values() const;
};

enum class Aggregate { Mean, Median };
std::string to_string(Aggregate a);
double aggregate(std::vector<double> scores, Aggregate how);

/// Type-7 (linear interpolation) empirical quantile, level in [0, 1].
double quantile(std::vector<double> values, double level);

struct CvPlan {
  Index folds = 5;
  std::vector<double> lambdas{1e-3};
  /// kappa or epsilon values; a single placeholder for the square loss.
  std::vector<double> params{0.0};
  Aggregate aggregate = Aggregate::Mean;
  std::uint64_t seed = 0;
  unsigned jobs = 0;

  void validate() const;
};

/// Seeded shuffle of 0..n-1 cut into k contiguous blocks (sizes differ by
/// at most one). Each block is sorted ascending.
std::vector<std::vector<Index>> make_folds(Index n, Index k, std::uint64_t seed);

struct CvCell {
  double lambda = 0.0;
  double param = 0.0;
  std::vector<double> fold_scores;  // +inf where the fit failed
  double score = 0.0;
};

struct CvResult {
  std::vector<CvCell> table;  // lambda-major, grid order
  std::size_t best = 0;
  double best_lambda() const { return table[best].lambda; }
  double best_param() const { return table[best].param; }
};

/// Lowest aggregate score; exact ties go to the larger lambda, then the
/// larger parameter.
std::size_t select_best(const std::vector<CvCell>& table);

/// Validation score of one (train, valid, lambda, param) cell.
using CvScorer =
    std::function<double(const FunctionalDataset& train, const FunctionalDataset& valid, double lambda, double param)>;

CvResult cross_validate(const FunctionalDataset& data, const CvPlan& plan, const CvScorer& scorer);

enum class LossFamily { Square, Huber, EpsInsensitive };
enum class Metric { Mse, Nmse };

/// Base fit options plus the loss family whose parameter is swept.
struct ModelTemplate {
  FitOptions options;
  LossFamily family = LossFamily::Square;
  PNorm p = PNorm(2.0);
  Metric metric = Metric::Mse;

  LossSpec loss_for(double param) const;
  FitOptions options_for(double lambda, double param) const;
};

CvScorer make_scorer(const ModelTemplate& tmpl);
CvResult cross_validate(const FunctionalDataset& data, const CvPlan& plan, const ModelTemplate& tmpl);

/// CSV with columns lambda,loss_param,fold,mse.
std::string format_fold_table(const CvResult& result);
/// CSV with columns lambda,loss_param,score.
std::string format_aggregate_table(const CvResult& result);

struct RobustnessRatioSpec {
  int p = 2;
  std::vector<double> levels{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};

  void validate() const;
};

struct RobustnessRatioResult {
  double ratio = 0.0;
  double kappa = 0.0;
  std::vector<double> kappas;  // one per level
  std::vector<double> ratios;  // NaN where the candidate was skipped
};

/// min over candidate kappa of (1/n) sum_i H_kappa^p(corrupted_i) / H_kappa^p(clean_i).
/// Candidates are the level quantiles of the clean residual q-norms, q dual to p.
RobustnessRatioResult robustness_ratio(const std::vector<DiscretizedFunction>& clean,
                                       const std::vector<DiscretizedFunction>& corrupted,
                                       const RobustnessRatioSpec& spec);

}  // namespace foreg
