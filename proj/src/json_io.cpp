#include "foreg/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "foreg/error.hpp"

namespace foreg {

using nlohmann::json;

namespace {

double number(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ValidationError(std::string(where) + ": missing '" + key + "'");
  const json& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw ValidationError(std::string(where) + ": '" + key + "' must be a number");
  return v.get<double>();
}

json exponent_to_json(PNorm p) {
  if (p.is_infinite()) return "inf";
  return p.value();
}

}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
  }
}

json kernel_to_json(const ScalarKernel& k) {
  json j = {{"type", k.name()}, {"rho", k.rho()}};
  if (const auto* ig = std::get_if<IntegralGaussianKernel>(&k.variant())) j["coefficients"] = ig->coefficients;
  return j;
}

ScalarKernel kernel_from_json(const json& j) {
  reject_unknown_keys(j, {"type", "rho", "coefficients"}, "kernel");
  const std::string type = j.value("type", "");
  const double rho = number(j, "rho", "kernel");
  if (type == "gaussian") return ScalarKernel::gaussian(rho);
  if (type == "laplacian") return ScalarKernel::laplacian(rho);
  if (type == "integral_gaussian") return ScalarKernel::integral_gaussian(rho, j.value("coefficients", Index{13}));
  throw ValidationError("kernel: unknown type '" + type + "'");
}

json loss_to_json(const LossSpec& loss) {
  return std::visit(
      [](const auto& l) -> json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, SquareLoss>) return {{"type", "square"}};
        else if constexpr (std::is_same_v<T, HuberLoss>)
          return {{"type", "huber"}, {"kappa", l.kappa}, {"p", exponent_to_json(l.p)}};
        else return {{"type", "eps"}, {"epsilon", l.epsilon}, {"p", exponent_to_json(l.p)}};
      },
      loss);
}

LossSpec loss_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("loss: expected an object");
  const std::string type = j.value("type", "");
  if (type == "square") {
    reject_unknown_keys(j, {"type"}, "loss");
    return square_loss();
  }
  if (type == "huber") {
    reject_unknown_keys(j, {"type", "kappa", "p"}, "loss");
    return huber_loss(number(j, "kappa", "loss"), number(j, "p", "loss"));
  }
  if (type == "eps") {
    reject_unknown_keys(j, {"type", "epsilon", "p"}, "loss");
    return eps_insensitive_loss(number(j, "epsilon", "loss"), PNorm(number(j, "p", "loss")));
  }
  throw ValidationError("loss: unknown type '" + type + "'");
}

json solver_to_json(const SolverConfig& c) {
  json step = std::visit(
      [](const auto& r) -> json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, FixedStep>) return {{"type", "fixed"}, {"gamma", r.gamma}};
        else if constexpr (std::is_same_v<T, LipschitzStep>) return {{"type", "lipschitz"}};
        else {
          json b = {{"type", "backtracking"}, {"shrink", r.shrink}};
          if (r.initial) b["initial"] = *r.initial;
          return b;
        }
      },
      c.step);
  return {{"max_iters", c.max_iters},
          {"tolerance", c.tolerance},
          {"window", c.window},
          {"fixed_point_tolerance", c.fixed_point_tolerance},
          {"step", step},
          {"restart", c.restart},
          {"warm_start", c.warm_start == WarmStartKind::Sylvester ? "sylvester" : "zero"}};
}

SolverConfig solver_from_json(const json& j) {
  reject_unknown_keys(j, {"max_iters", "tolerance", "window", "fixed_point_tolerance", "step", "restart", "warm_start"},
                      "solver");
  SolverConfig c;
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.window = j.value("window", c.window);
  c.fixed_point_tolerance = j.value("fixed_point_tolerance", c.fixed_point_tolerance);
  c.restart = j.value("restart", c.restart);
  if (j.contains("warm_start")) {
    const std::string ws = j.at("warm_start").get<std::string>();
    if (ws == "sylvester") c.warm_start = WarmStartKind::Sylvester;
    else if (ws == "zero") c.warm_start = WarmStartKind::Zero;
    else throw ValidationError("solver: warm_start must be 'zero' or 'sylvester'");
  }
  if (j.contains("step")) {
    const json& s = j.at("step");
    const std::string type = s.value("type", "");
    if (type == "fixed") {
      reject_unknown_keys(s, {"type", "gamma"}, "solver.step");
      c.step = FixedStep{number(s, "gamma", "solver.step")};
    } else if (type == "lipschitz") {
      reject_unknown_keys(s, {"type"}, "solver.step");
      c.step = LipschitzStep{};
    } else if (type == "backtracking") {
      reject_unknown_keys(s, {"type", "shrink", "initial"}, "solver.step");
      BacktrackingStep b;
      b.shrink = s.value("shrink", b.shrink);
      if (s.contains("initial")) b.initial = s.at("initial").get<double>();
      c.step = b;
    } else {
      throw ValidationError("solver.step: unknown type '" + type + "'");
    }
  }
  c.validate();
  return c;
}

json report_to_json(const SolveReport& r, bool include_trace) {
  json j = {{"objective", r.objective},       {"iterations", r.iterations},
            {"restarts", r.restarts},         {"converged", r.converged},
            {"warm_start_failed", r.warm_start_failed}, {"final_step", r.final_step}};
  if (include_trace) j["trace"] = r.trace;
  return j;
}

}  // namespace foreg
