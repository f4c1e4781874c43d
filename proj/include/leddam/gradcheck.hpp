#pragma once

#include "leddam/autodiff.hpp"
#include "leddam/params.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace leddam {

/// Central differences (f(θ + h·e_i) - f(θ - h·e_i)) / 2h for every coordinate.
/// Throws EvaluationError if f returns a non-finite value.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double h = 1e-5);

/// Gradients below this magnitude are indistinguishable from central
/// difference rounding noise (about 1e-11 at h = 1e-5 for O(1) losses), so the
/// relative error of a structurally zero gradient is measured against it.
inline constexpr double kGradientScaleFloor = 1e-6;

/// max|a - n| / max(max|n|, max|a|, kGradientScaleFloor): the error of a whole
/// gradient tensor relative to its own scale.
double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric);

struct TensorGradCheck {
    std::string name;
    std::size_t count = 0;
    double relative_error = 0.0;
    bool passed = false;
};

/// Builds a scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<ad::Var(ad::Tape&)>;

/// Compares tape gradients of `loss` against central differences for every
/// trainable tensor in `store`. Parameter values are restored afterwards.
std::vector<TensorGradCheck> check_param_gradients(ParamStore& store, const LossBuilder& loss, double h = 1e-5,
                                                   double tolerance = 1e-4);

} // namespace leddam
