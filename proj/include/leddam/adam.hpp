#pragma once

#include "leddam/params.hpp"

#include <vector>

namespace leddam {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers, one pair per tensor of the store it was built for.
class AdamState {
public:
    AdamState(const ParamStore& store, AdamConfig config);

    const AdamConfig& config() const noexcept { return config_; }
    void set_lr(double lr) { config_.lr = lr; }
    std::size_t step_count() const noexcept { return t_; }
    const Matrix& first_moment(std::size_t i) const { return m_.at(i); }
    const Matrix& second_moment(std::size_t i) const { return v_.at(i); }

    friend void adam_step(ParamStore& store, AdamState& state);

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

/// One bias-corrected ADAM update of every trainable tensor, then zeroes all
/// gradients. Non-trainable tensors keep their exact values.
void adam_step(ParamStore& store, AdamState& state);

} // namespace leddam
