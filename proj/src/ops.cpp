#include "leddam/ops.hpp"

#include "leddam/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace leddam::ops {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
    return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
    return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

void require_inner(std::size_t lhs, std::size_t rhs, const Matrix& a, const Matrix& b, const char* what) {
    if (lhs != rhs) {
        throw DimensionError(std::string(what) + ": inner dimensions disagree for " + a.shape_string() + " and " +
                             b.shape_string());
    }
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_inner(a.cols(), b.rows(), a, b, "matmul");
    Matrix c(a.rows(), b.cols());
    if (a.cols() == 0) return c;
    view(c).noalias() = view(a) * view(b);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require_inner(a.rows(), b.rows(), a, b, "matmul_tn");
    Matrix c(a.cols(), b.cols());
    if (a.rows() == 0) return c;
    view(c).noalias() = view(a).transpose() * view(b);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require_inner(a.cols(), b.cols(), a, b, "matmul_nt");
    Matrix c(a.rows(), b.rows());
    if (a.cols() == 0) return c;
    view(c).noalias() = view(a) * view(b).transpose();
    return c;
}

MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& dc) {
    if (dc.rows() != a.rows() || dc.cols() != b.cols()) {
        throw DimensionError("matmul_backward: upstream " + dc.shape_string() + " does not match product of " +
                             a.shape_string() + " and " + b.shape_string());
    }
    return {matmul_nt(dc, b), matmul_tn(a, dc)};
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto out = y.row(r);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            out[c] = std::exp(in[c] - mx);
            sum += out[c];
        }
        const double inv = 1.0 / sum;
        for (double& v : out) v *= inv;
    }
    return y;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    require_same_shape(y, dy, "softmax_rows_backward");
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        auto gr = dy.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
        auto out = dx.row(r);
        for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
    }
    return dx;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta, double eps,
                  LayerNormCache* cache) {
    if (gamma.size() != x.cols() || beta.size() != x.cols()) {
        throw DimensionError("layer_norm: gamma/beta lengths " + std::to_string(gamma.size()) + "/" +
                             std::to_string(beta.size()) + " do not match input " + x.shape_string());
    }
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t n = x.cols();
    Matrix y(x.rows(), n);
    Matrix normalized(x.rows(), n);
    std::vector<double> inv_std(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        auto xh = normalized.row(r);
        auto out = y.row(r);
        for (std::size_t c = 0; c < n; ++c) {
            xh[c] = (in[c] - mean) * is;
            out[c] = xh[c] * gamma[c] + beta[c];
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

LayerNormGrads layer_norm_backward(const Matrix& dy, std::span<const double> gamma, const LayerNormCache& cache) {
    require_same_shape(dy, cache.normalized, "layer_norm_backward");
    const std::size_t n = dy.cols();
    LayerNormGrads g{Matrix(dy.rows(), n), Matrix(1, n), Matrix(1, n)};
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        auto gr = dy.row(r);
        auto xh = cache.normalized.row(r);
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            g.dgamma[c] += gr[c] * xh[c];
            g.dbeta[c] += gr[c];
            dxhat[c] = gr[c] * gamma[c];
            mean_d += dxhat[c];
            mean_dx += dxhat[c] * xh[c];
        }
        mean_d /= static_cast<double>(n);
        mean_dx /= static_cast<double>(n);
        auto out = g.dx.row(r);
        for (std::size_t c = 0; c < n; ++c) out[c] = cache.inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
    }
    return g;
}

Matrix relu(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Matrix relu_backward(const Matrix& x, const Matrix& dy) {
    require_same_shape(x, dy, "relu_backward");
    Matrix dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
    return dx;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
    require_same_shape(pred, target, "mse_loss");
    if (pred.empty()) throw PreconditionError("mse_loss: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

Matrix mse_loss_backward(const Matrix& pred, const Matrix& target, double upstream) {
    require_same_shape(pred, target, "mse_loss_backward");
    Matrix g(pred.rows(), pred.cols());
    const double scale = 2.0 * upstream / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

double mae(const Matrix& pred, const Matrix& target) {
    require_same_shape(pred, target, "mae");
    if (pred.empty()) throw PreconditionError("mae: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

} // namespace leddam::ops
