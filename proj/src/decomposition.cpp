#include "leddam/decomposition.hpp"

#include "leddam/errors.hpp"
#include "leddam/ops.hpp"

#include <algorithm>
#include <cmath>

namespace leddam {
namespace {

void require_kernel_size(int k) {
    if (k <= 0) throw ConfigError("kernel size must be at least 1, got " + std::to_string(k));
}

void require_weights(const Matrix& w) {
    if (w.rows() != 1 || w.cols() == 0) {
        throw DimensionError("decomposition kernel must be 1xK with K >= 1, got " + w.shape_string());
    }
}

Matrix convolve_rows(const Matrix& x, const Matrix& w) {
    require_weights(w);
    if (x.cols() == 0) throw PreconditionError("decompose: rows must hold at least one value");
    const std::size_t d_len = x.cols();
    const std::size_t k_len = w.cols();
    Matrix trend(x.rows(), d_len);
    std::vector<double> padded;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        padded = replicate_pad(x.row(r), k_len);
        auto out = trend.row(r);
        for (std::size_t d = 0; d < d_len; ++d) {
            double s = 0.0;
            for (std::size_t k = 0; k < k_len; ++k) s += w[k] * padded[d + k];
            out[d] = s;
        }
    }
    return trend;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

} // namespace

std::string_view to_string(Centering c) { return c == Centering::one_based ? "paper" : "zero"; }

Centering parse_centering(std::string_view text) {
    if (text == "paper" || text == "one_based") return Centering::one_based;
    if (text == "zero" || text == "zero_based") return Centering::zero_based;
    throw ConfigError("unknown centering '" + std::string(text) + "' (expected paper|zero)");
}

DecompKernel init_gaussian_kernel(int kernel_size, double sigma, Centering centering, bool trainable) {
    require_kernel_size(kernel_size);
    if (!(sigma > 0.0)) throw ConfigError("Gaussian kernel sigma must be positive");
    const auto k_len = static_cast<std::size_t>(kernel_size);
    Matrix u(1, k_len);
    const bool literal = centering == Centering::one_based;
    const double centre = literal ? kernel_size / 2.0 : (kernel_size - 1) / 2.0;
    for (std::size_t j = 0; j < k_len; ++j) {
        const double i = literal ? static_cast<double>(j + 1) : static_cast<double>(j);
        u[j] = std::exp(-(i - centre) * (i - centre) / (2.0 * sigma * sigma));
    }
    return DecompKernel{k_len, sigma, centering, ops::softmax_rows(u), trainable, true};
}

DecompKernel init_moving_average_kernel(int kernel_size) {
    require_kernel_size(kernel_size);
    const auto k_len = static_cast<std::size_t>(kernel_size);
    return DecompKernel{k_len, 1.0, Centering::one_based, Matrix(1, k_len, 1.0 / kernel_size), false, false};
}

std::vector<double> replicate_pad(std::span<const double> x, std::size_t kernel_size) {
    if (x.empty()) throw PreconditionError("replicate_pad: empty series");
    if (kernel_size == 0) throw ConfigError("replicate_pad: kernel size must be at least 1");
    const std::size_t left = (kernel_size - 1) / 2;
    const std::size_t right = kernel_size - 1 - left;
    std::vector<double> out;
    out.reserve(x.size() + kernel_size - 1);
    out.insert(out.end(), left, x.front());
    out.insert(out.end(), x.begin(), x.end());
    out.insert(out.end(), right, x.back());
    return out;
}

Decomposition decompose(const Matrix& x, const Matrix& weights) {
    Matrix trend = convolve_rows(x, weights);
    Matrix seasonal = subtract(x, trend);
    return {std::move(trend), std::move(seasonal)};
}

Decomposition multiscale_decompose(const Matrix& x, const MultiScaleDecomp& ms) {
    if (ms.kernels.empty()) throw ConfigError("multi-scale decomposition needs at least one kernel");
    Matrix trend(x.rows(), x.cols());
    for (const auto& k : ms.kernels) {
        if (k.centering != ms.kernels.front().centering) {
            throw ConfigError("multi-scale kernels must share one centering convention");
        }
        Matrix t = convolve_rows(x, k.weights);
        for (std::size_t i = 0; i < t.size(); ++i) trend[i] += t[i];
    }
    if (ms.kernels.size() > 1) {
        const double inv = 1.0 / static_cast<double>(ms.kernels.size());
        for (std::size_t i = 0; i < trend.size(); ++i) trend[i] *= inv;
    }
    Matrix seasonal = subtract(x, trend);
    return {std::move(trend), std::move(seasonal)};
}

namespace ad {

Var trend_conv(Var x, Var weights) {
    Tape& t = *x.tape;
    Matrix trend = convolve_rows(x.value(), weights.value());
    return t.record(std::move(trend), {x, weights}, [x, weights](Tape& t, const Matrix& g) {
        const Matrix& xv = t.value(x);
        const Matrix& w = t.value(weights);
        const std::size_t d_len = xv.cols();
        const std::size_t k_len = w.cols();
        const auto left = static_cast<std::ptrdiff_t>((k_len - 1) / 2);
        const auto last = static_cast<std::ptrdiff_t>(d_len) - 1;
        Matrix* dx = t.grad_buffer(x);
        Matrix* dw = t.grad_buffer(weights);
        // Rows are visited in order so the reduction into dw is deterministic.
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            auto gr = g.row(r);
            auto xr = xv.row(r);
            for (std::size_t d = 0; d < d_len; ++d) {
                const double gd = gr[d];
                for (std::size_t k = 0; k < k_len; ++k) {
                    const auto src = static_cast<std::size_t>(
                        std::clamp(static_cast<std::ptrdiff_t>(d + k) - left, std::ptrdiff_t{0}, last));
                    if (dx != nullptr) (*dx)(r, src) += w[k] * gd;
                    if (dw != nullptr) (*dw)[k] += xr[src] * gd;
                }
            }
        }
    });
}

TrendSeasonal decompose(Var x, Var weights) {
    Var trend = trend_conv(x, weights);
    return {trend, sub(x, trend)};
}

TrendSeasonal multiscale_decompose(Var x, const std::vector<Var>& weights) {
    if (weights.empty()) throw ConfigError("multi-scale decomposition needs at least one kernel");
    std::vector<Var> trends;
    trends.reserve(weights.size());
    for (Var w : weights) trends.push_back(trend_conv(x, w));
    Var trend = mean_of(trends);
    return {trend, sub(x, trend)};
}

} // namespace ad
} // namespace leddam
