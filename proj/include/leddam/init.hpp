#pragma once

#include "leddam/matrix.hpp"

#include <cmath>
#include <random>

namespace leddam::init {

/// Entries drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)]; fan_in is `rows`.
inline Matrix uniform_fan_in(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
    return m;
}

inline Matrix normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = dist(rng);
    return m;
}

} // namespace leddam::init
