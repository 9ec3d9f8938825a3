#pragma once

#include <limits>
#include <string>
#include <variant>

#include "foreg/error.hpp"

namespace foreg {

/// Exponent of a functional p-norm. p = infinity is the sup norm.
class PNorm {
 public:
  constexpr PNorm() = default;
  explicit PNorm(double p) : p_(p) {
    if (!(p >= 1.0)) throw ValidationError("PNorm: exponent must be >= 1");
  }

  static PNorm infinity() { return PNorm(std::numeric_limits<double>::infinity()); }

  double value() const { return p_; }
  bool is_infinite() const { return p_ == std::numeric_limits<double>::infinity(); }

  /// Conjugate exponent q with 1/p + 1/q = 1.
  PNorm conjugate() const {
    if (is_infinite()) return PNorm(1.0);
    if (p_ == 1.0) return infinity();
    return PNorm(p_ / (p_ - 1.0));
  }

  std::string to_string() const { return is_infinite() ? "inf" : std::to_string(p_); }

  friend bool operator==(PNorm a, PNorm b) { return a.p_ == b.p_; }

 private:
  double p_ = 2.0;
};

struct SquareLoss {};

/// Square loss infimally convolved with kappa * ||.||_p, p in {1, 2}.
struct HuberLoss {
  double kappa;
  PNorm p;
};

/// Square loss infimally convolved with the indicator of the p-ball of
/// radius epsilon, p in {2, inf}.
struct EpsInsensitiveLoss {
  double epsilon;
  PNorm p;
};

using LossSpec = std::variant<SquareLoss, HuberLoss, EpsInsensitiveLoss>;

inline LossSpec square_loss() { return SquareLoss{}; }

inline LossSpec huber_loss(double kappa, double p) {
  if (!(kappa > 0.0)) throw ValidationError("huber: kappa must be positive");
  if (p != 1.0 && p != 2.0) throw UnsupportedError("huber: p must be 1 or 2");
  return HuberLoss{kappa, PNorm(p)};
}

/// epsilon = 0 is accepted and reduces to the square loss.
inline LossSpec eps_insensitive_loss(double epsilon, PNorm p) {
  if (!(epsilon >= 0.0)) throw ValidationError("eps-insensitive: epsilon must be >= 0");
  if (!(p.value() == 2.0 || p.is_infinite()))
    throw UnsupportedError("eps-insensitive: p must be 2 or inf");
  return EpsInsensitiveLoss{epsilon, p};
}

/// Short label such as "square", "huber2", "huber1", "eps2", "epsinf".
std::string loss_label(const LossSpec& loss);

}  // namespace foreg
