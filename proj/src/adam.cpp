#include "leddam/adam.hpp"

#include "leddam/errors.hpp"

#include <cmath>

namespace leddam {

AdamState::AdamState(const ParamStore& store, AdamConfig config) : config_(config) {
    m_.reserve(store.size());
    v_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        m_.emplace_back(store[i].value.rows(), store[i].value.cols());
        v_.emplace_back(store[i].value.rows(), store[i].value.cols());
    }
}

void adam_step(ParamStore& store, AdamState& state) {
    if (store.size() != state.m_.size()) {
        throw PreconditionError("adam_step: optimizer state built for " + std::to_string(state.m_.size()) +
                                " tensors, store has " + std::to_string(store.size()));
    }
    if (store.trainable_scalar_count() == 0) throw PreconditionError("adam_step: no trainable gradients to apply");
    for (std::size_t i = 0; i < store.size(); ++i) {
        const ParamTensor& p = store[i];
        if (p.trainable && !p.grad.same_shape(p.value)) {
            throw PreconditionError("adam_step: gradient of '" + p.name + "' is missing or mis-shaped");
        }
    }

    const AdamConfig& c = state.config_;
    ++state.t_;
    const double t = static_cast<double>(state.t_);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t i = 0; i < store.size(); ++i) {
        ParamTensor& p = store[i];
        if (p.trainable) {
            Matrix& m = state.m_[i];
            Matrix& v = state.v_[i];
            for (std::size_t k = 0; k < p.value.size(); ++k) {
                const double g = p.grad[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                const double m_hat = m[k] / bc1;
                const double v_hat = v[k] / bc2;
                p.value[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
            }
        }
        p.zero_grad();
    }
}

} // namespace leddam
