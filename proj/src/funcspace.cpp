#include "foreg/funcspace.hpp"

#include <algorithm>
#include <cmath>

#include "foreg/error.hpp"

namespace foreg {

namespace {

constexpr double kWeightSumTolerance = 1e-12;

bool weights_are_uniform(const Vector& w) {
  const double u = 1.0 / static_cast<double>(w.size());
  return (w.array() == u).all();
}

}  // namespace

Grid::Grid(Vector locations)
    : Grid(locations, Vector::Constant(locations.size(), 1.0 / static_cast<double>(locations.size()))) {}

Grid::Grid(Vector locations, Vector weights) : locations_(std::move(locations)), weights_(std::move(weights)) {
  if (locations_.size() < 1) throw ValidationError("Grid: needs at least one location");
  if (weights_.size() != locations_.size()) throw ValidationError("Grid: weights/locations length mismatch");
  if (!locations_.allFinite()) throw ValidationError("Grid: non-finite location");
  for (Index j = 1; j < locations_.size(); ++j) {
    if (!(locations_[j] > locations_[j - 1])) throw ValidationError("Grid: locations must be strictly increasing");
  }
  if (!(weights_.array() > 0.0).all()) throw ValidationError("Grid: weights must be positive");
  if (std::abs(weights_.sum() - 1.0) > kWeightSumTolerance) throw ValidationError("Grid: weights must sum to 1");
  uniform_ = weights_are_uniform(weights_);
}

Grid Grid::linspace(double lo, double hi, Index m) {
  if (m < 1) throw ValidationError("Grid::linspace: m must be >= 1");
  if (m == 1) return Grid(Vector::Constant(1, lo));
  return Grid(Vector::LinSpaced(m, lo, hi));
}

Grid Grid::midpoints(double lo, double hi, Index m) {
  if (m < 1) throw ValidationError("Grid::midpoints: m must be >= 1");
  if (!(hi > lo)) throw ValidationError("Grid::midpoints: need hi > lo");
  const double h = (hi - lo) / double(m);
  return Grid(Vector::LinSpaced(m, lo + 0.5 * h, hi - 0.5 * h));
}

bool operator==(const Grid& a, const Grid& b) {
  return a.locations_.size() == b.locations_.size() && a.locations_ == b.locations_ && a.weights_ == b.weights_;
}

DiscretizedFunction::DiscretizedFunction(GridPtr grid, Vector values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw ValidationError("DiscretizedFunction: null grid");
  if (values_.size() != grid_->size()) throw ValidationError("DiscretizedFunction: values length != grid length");
  if (!values_.allFinite()) throw ValidationError("DiscretizedFunction: non-finite value");
}

DiscretizedFunction DiscretizedFunction::zeros(GridPtr grid) {
  const Index m = grid->size();
  return DiscretizedFunction(std::move(grid), Vector::Zero(m));
}

DiscretizedFunction DiscretizedFunction::with_values(Vector values) const {
  DiscretizedFunction out = *this;
  out.values_ = std::move(values);
  return out;
}

bool same_grid(const DiscretizedFunction& f, const DiscretizedFunction& g) {
  return f.grid() == g.grid() || *f.grid() == *g.grid();
}

namespace detail {

double weighted_norm(const Eigen::Ref<const Vector>& values, const Eigen::Ref<const Vector>& weights, PNorm p) {
  if (values.size() == 0) return 0.0;
  if (p.is_infinite()) return values.cwiseAbs().maxCoeff();
  const double e = p.value();
  if (e == 2.0) return std::sqrt(weights.dot(values.cwiseAbs2()));
  if (e == 1.0) return weights.dot(values.cwiseAbs());
  double acc = 0.0;
  for (Index j = 0; j < values.size(); ++j) acc += weights[j] * std::pow(std::abs(values[j]), e);
  return std::pow(acc, 1.0 / e);
}

void clamp_inplace(Eigen::Ref<Vector> values, double radius) {
  values = values.cwiseMax(-radius).cwiseMin(radius);
}

void soft_threshold_inplace(Eigen::Ref<Vector> values, double threshold) {
  for (Index j = 0; j < values.size(); ++j) {
    const double a = std::abs(values[j]) - threshold;
    // |x| == threshold maps to 0
    values[j] = a > 0.0 ? std::copysign(a, values[j]) : 0.0;
  }
}

}  // namespace detail

double mc_norm(const DiscretizedFunction& f, PNorm p) {
  return detail::weighted_norm(f.values(), f.grid()->weights(), p);
}

double mc_inner(const DiscretizedFunction& f, const DiscretizedFunction& g) {
  if (!same_grid(f, g)) throw ValidationError("mc_inner: functions live on different grids");
  return f.grid()->weights().dot(f.values().cwiseProduct(g.values()));
}

DiscretizedFunction project_qball(const DiscretizedFunction& f, PNorm q, double radius) {
  if (!(radius > 0.0)) throw ValidationError("project_qball: radius must be positive");
  if (q.is_infinite()) {
    Vector v = f.values();
    detail::clamp_inplace(v, radius);
    return f.with_values(std::move(v));
  }
  if (q.value() == 2.0) {
    const double norm = mc_norm(f, q);
    if (norm <= radius) return f;
    // shrink the factor by ulps until the rounded result lies inside the ball,
    // so a second projection is the identity
    double s = radius / norm;
    DiscretizedFunction out = f.with_values(f.values() * s);
    while (mc_norm(out, q) > radius) {
      s = std::nextafter(s, 0.0);
      out = f.with_values(f.values() * s);
    }
    return out;
  }
  throw UnsupportedError("project_qball: projection is only tractable for q in {2, inf}");
}

DiscretizedFunction prox_qnorm(const DiscretizedFunction& f, PNorm q, double scale) {
  if (!(scale > 0.0)) throw ValidationError("prox_qnorm: scale must be positive");
  if (q.is_infinite() || (q.value() != 1.0 && q.value() != 2.0))
    throw UnsupportedError("prox_qnorm: proximal operator is only computable for q in {1, 2}");
  Vector v = f.values();
  if (q.value() == 1.0) {
    detail::soft_threshold_inplace(v, scale);
    return f.with_values(std::move(v));
  }
  const double norm = mc_norm(f, q);
  if (norm <= scale) return f.with_values(Vector::Zero(v.size()));
  return f.with_values(v * (1.0 - scale / norm));
}

double eval_loss(const DiscretizedFunction& residual, const LossSpec& loss) {
  const PNorm two(2.0);
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, SquareLoss>) {
          const double n = mc_norm(residual, two);
          return 0.5 * n * n;
        } else if constexpr (std::is_same_v<T, HuberLoss>) {
          if (!(l.kappa > 0.0)) throw ValidationError("eval_loss: kappa must be positive");
          const PNorm q = l.p.conjugate();
          if (!(q.is_infinite() || q.value() == 2.0))
            throw UnsupportedError("eval_loss: Huber loss needs a dual exponent q in {2, inf}");
          const DiscretizedFunction proj = project_qball(residual, q, l.kappa);
          const double inner = mc_norm(proj, two);
          const DiscretizedFunction rest = residual.with_values(residual.values() - proj.values());
          return 0.5 * inner * inner + l.kappa * mc_norm(rest, l.p);
        } else {
          if (!(l.p.is_infinite() || l.p.value() == 2.0))
            throw UnsupportedError("eval_loss: eps-insensitive loss needs p in {2, inf}");
          if (!(l.epsilon >= 0.0)) throw ValidationError("eval_loss: epsilon must be >= 0");
          if (l.epsilon == 0.0) {
            const double n = mc_norm(residual, two);
            return 0.5 * n * n;
          }
          const DiscretizedFunction proj = project_qball(residual, l.p, l.epsilon);
          const double d = detail::weighted_norm(residual.values() - proj.values(), residual.grid()->weights(), two);
          return 0.5 * d * d;
        }
      },
      loss);
}

std::string loss_label(const LossSpec& loss) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, SquareLoss>) {
          return "square";
        } else if constexpr (std::is_same_v<T, HuberLoss>) {
          return l.p.value() == 1.0 ? "huber1" : "huber2";
        } else {
          return l.p.is_infinite() ? "epsinf" : "eps2";
        }
      },
      loss);
}

}  // namespace foreg
