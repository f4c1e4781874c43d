#include "leddam/gradcheck.hpp"

#include "leddam/errors.hpp"

#include <algorithm>
#include <cmath>

namespace leddam {

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> theta, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
    std::vector<double> x(theta.begin(), theta.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvaluationError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    if (analytic.size() != numeric.size()) {
        throw DimensionError("gradient_relative_error: lengths " + std::to_string(analytic.size()) + " and " +
                             std::to_string(numeric.size()));
    }
    double diff = 0.0;
    double scale = kGradientScaleFloor;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return diff / scale;
}

std::vector<TensorGradCheck> check_param_gradients(ParamStore& store, const LossBuilder& loss, double h,
                                                   double tolerance) {
    store.zero_grad();
    {
        ad::Tape tape;
        ad::Var l = loss(tape);
        tape.backward(l);
    }

    auto eval = [&]() {
        ad::Tape tape;
        return loss(tape).value()[0];
    };

    std::vector<TensorGradCheck> out;
    for (std::size_t i = 0; i < store.size(); ++i) {
        ParamTensor& p = store[i];
        if (!p.trainable) continue;
        const Matrix original = p.value;
        auto f = [&](std::span<const double> theta) {
            std::copy(theta.begin(), theta.end(), p.value.data().begin());
            return eval();
        };
        std::vector<double> numeric;
        try {
            numeric = finite_diff_grad(f, original.data(), h);
        } catch (...) {
            p.value = original;
            throw;
        }
        p.value = original;
        TensorGradCheck c;
        c.name = p.name;
        c.count = p.value.size();
        c.relative_error = gradient_relative_error(p.grad.data(), numeric);
        c.passed = c.relative_error < tolerance;
        out.push_back(std::move(c));
    }
    store.zero_grad();
    return out;
}

} // namespace leddam
