#pragma once

// Dual attention: channel-wise self-attention over whole-series tokens and
// auto-regressive attention of a series against its own cyclic rotations.
// Both are post-norm encoder blocks:
//   H   = LayerNorm(x + Attn)
//   out = LayerNorm(FFN(H) + H),  FFN = W2 · dropout(relu(W1 · H + b1)) + b2

#include "leddam/autodiff.hpp"
#include "leddam/params.hpp"

#include <random>
#include <string>
#include <vector>

namespace leddam {

struct EncoderBlockParams {
    ParamTensor* wq = nullptr;
    ParamTensor* bq = nullptr;
    ParamTensor* wk = nullptr;
    ParamTensor* bk = nullptr;
    ParamTensor* wv = nullptr;
    ParamTensor* bv = nullptr;
    ParamTensor* w1 = nullptr;
    ParamTensor* b1 = nullptr;
    ParamTensor* w2 = nullptr;
    ParamTensor* b2 = nullptr;
    ParamTensor* ln1_gamma = nullptr;
    ParamTensor* ln1_beta = nullptr;
    ParamTensor* ln2_gamma = nullptr;
    ParamTensor* ln2_beta = nullptr;
    std::size_t n_heads = 1;
    double dropout = 0.0;

    std::size_t model_dim() const { return wq->value.rows(); }
    std::size_t ff_dim() const { return w1->value.cols(); }
};

/// Registers the fourteen tensors of one block under `prefix` (e.g.
/// "channel.0."). Weights are uniform in ±1/sqrt(fan_in), biases zero,
/// layer-norm gains one and shifts zero.
EncoderBlockParams register_encoder_block(ParamStore& store, const std::string& prefix, std::size_t dim,
                                          std::size_t ff_dim, std::size_t n_heads, double dropout,
                                          std::mt19937_64& rng);

struct AutoRegConfig {
    std::size_t step = 1; // L

    /// M = floor(D / L). Throws ConfigError unless 1 <= L <= D.
    std::size_t token_count(std::size_t dim) const;
};

/// Row j is x left-rotated by j·L: x[jL:D] ‖ x[0:jL], for j = 0..floor(D/L)-1.
Matrix make_autoregressive_tokens(std::span<const double> x, std::size_t step);

/// Queries are split into consecutive groups of `query_rows` rows, keys and
/// values into groups of `key_rows`; group g of the queries attends only to
/// group g of the keys. Columns are split evenly into `n_heads` heads.
struct AttentionLayout {
    std::size_t query_rows = 1;
    std::size_t key_rows = 1;
    std::size_t n_heads = 1;
};

/// softmax(Q Kᵀ / sqrt(d_k)) V per group and head. When `probs` is non-null it
/// receives the probability matrices, ordered group-major then head.
Matrix grouped_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionLayout& layout,
                         std::vector<Matrix>* probs = nullptr);

// Convenience forms on plain matrices (a throwaway tape per call).

/// X is N x D; every row is one channel token.
Matrix channel_attention_block(const Matrix& x, const EncoderBlockParams& p, bool training = false,
                               std::mt19937_64* rng = nullptr);
/// x is 1 x D.
Matrix autoreg_attention_block(const Matrix& x, const EncoderBlockParams& p, const AutoRegConfig& cfg,
                               bool training = false, std::mt19937_64* rng = nullptr);
/// The auto-regressive block applied with shared parameters to each row of X.
Matrix intra_series_forward(const Matrix& x, const EncoderBlockParams& p, const AutoRegConfig& cfg,
                            bool training = false, std::mt19937_64* rng = nullptr);

namespace ad {

Var grouped_attention(Var q, Var k, Var v, const AttentionLayout& layout);
/// (R x D) -> (R·M x D): the M rotations of each row, row-major by source row.
Var rotation_tokens(Var x, std::size_t step);

/// X is (B·N) x D holding B samples of N channel tokens each.
Var channel_attention_block(Var x, std::size_t channels, const EncoderBlockParams& p, const Context& ctx);
/// Every row of X is an independent series; the block weights are shared.
Var intra_series_forward(Var x, const EncoderBlockParams& p, const AutoRegConfig& cfg, const Context& ctx);

} // namespace ad
} // namespace leddam
