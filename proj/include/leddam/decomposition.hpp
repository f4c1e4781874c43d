#pragma once

// Trend/seasonal decomposition by a 1-D convolution over replicate-padded rows.
// The same kernel is shared by every row; seasonal = input - trend.

#include "leddam/autodiff.hpp"
#include "leddam/matrix.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace leddam {

/// Where the Gaussian bump is centred when initializing a learnable kernel.
///  - one_based: taps i = 1..K, centre K/2 (peak straddles two taps for odd K)
///  - zero_based:    taps i = 0..K-1, centre (K-1)/2 (symmetric for odd K)
enum class Centering { one_based, zero_based };

std::string_view to_string(Centering c);
Centering parse_centering(std::string_view text);

struct DecompKernel {
    std::size_t size = 0;
    double sigma = 1.0;
    Centering centering = Centering::one_based;
    Matrix weights; // 1 x size
    bool trainable = false;
    bool gaussian = false; // false: uniform moving average
};

/// ω = softmax(exp(-(i - c)² / 2σ²)) over the K taps.
DecompKernel init_gaussian_kernel(int kernel_size, double sigma, Centering centering = Centering::one_based,
                                  bool trainable = true);

/// Uniform 1/K weights, never trainable.
DecompKernel init_moving_average_kernel(int kernel_size);

/// floor((K-1)/2) copies of the first value in front, ceil((K-1)/2) copies of
/// the last value behind. Output length is x.size() + K - 1.
std::vector<double> replicate_pad(std::span<const double> x, std::size_t kernel_size);

struct Decomposition {
    Matrix trend;
    Matrix seasonal;
};

/// Row-wise stride-1 convolution of the padded input with `weights` (1 x K).
Decomposition decompose(const Matrix& x, const Matrix& weights);
inline Decomposition decompose(const Matrix& x, const DecompKernel& kernel) { return decompose(x, kernel.weights); }

struct MultiScaleDecomp {
    std::vector<DecompKernel> kernels;
};

/// Trend is the element-wise mean of the per-kernel trends.
Decomposition multiscale_decompose(const Matrix& x, const MultiScaleDecomp& ms);

namespace ad {

/// Differentiable trend extraction (w.r.t. both `x` and `weights`).
Var trend_conv(Var x, Var weights);

struct TrendSeasonal {
    Var trend;
    Var seasonal;
};

TrendSeasonal decompose(Var x, Var weights);
/// One weight tensor per scale; trend averaged across scales.
TrendSeasonal multiscale_decompose(Var x, const std::vector<Var>& weights);

} // namespace ad
} // namespace leddam
