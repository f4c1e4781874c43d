#pragma once

// Forward and backward rules for the dense primitives. Pure functions on
// values; the tape in autodiff.hpp wires them together.

#include "leddam/matrix.hpp"

#include <span>
#include <vector>

namespace leddam::ops {

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

struct MatmulGrads {
    Matrix da;
    Matrix db;
};
/// dA = dC·Bᵀ, dB = Aᵀ·dC.
MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc);

/// Row-wise softmax with the row maximum subtracted before exponentiation.
Matrix softmax_rows(const Matrix& x);
/// Gradient w.r.t. the softmax input given its output `y` and upstream `dy`.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

struct LayerNormCache {
    Matrix normalized;              // (x - mean) / sqrt(var + eps), before the affine part
    std::vector<double> inv_std;    // one per row
};

/// Normalizes each row to zero mean / unit (biased) variance, then applies
/// gamma and beta. `cache` is filled when non-null.
Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps = 1e-5, LayerNormCache* cache = nullptr);

struct LayerNormGrads {
    Matrix dx;
    Matrix dgamma; // 1 x cols
    Matrix dbeta;  // 1 x cols
};
LayerNormGrads layer_norm_backward(const Matrix& dy, std::span<const double> gamma, const LayerNormCache& cache);

Matrix relu(const Matrix& x);
/// Passes `dy` where x > 0, zero elsewhere (including x == 0).
Matrix relu_backward(const Matrix& x, const Matrix& dy);

/// Mean of squared differences.
double mse_loss(const Matrix& pred, const Matrix& target);
/// d/dpred = 2(pred - target)/count, scaled by `upstream`.
Matrix mse_loss_backward(const Matrix& pred, const Matrix& target, double upstream = 1.0);

/// Mean of absolute differences.
double mae(const Matrix& pred, const Matrix& target);

} // namespace leddam::ops
