#pragma once

#include <json.hpp>

#include "foreg/dualsolver.hpp"
#include "foreg/kernels.hpp"
#include "foreg/loss.hpp"

namespace foreg {

// {"type": "gaussian" | "laplacian" | "integral_gaussian", "rho": x, ["coefficients": 13]}
nlohmann::json kernel_to_json(const ScalarKernel& k);
ScalarKernel kernel_from_json(const nlohmann::json& j);

// {"type": "square"} | {"type": "huber", "kappa": x, "p": 1|2}
//   | {"type": "eps", "epsilon": x, "p": 2|"inf"}
nlohmann::json loss_to_json(const LossSpec& loss);
LossSpec loss_from_json(const nlohmann::json& j);

nlohmann::json solver_to_json(const SolverConfig& c);
SolverConfig solver_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const SolveReport& r, bool include_trace = false);

/// Throws ValidationError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where);

}  // namespace foreg
