#include "leddam/attention.hpp"

#include "leddam/errors.hpp"
#include "leddam/init.hpp"
#include "leddam/ops.hpp"

#include <cmath>
#include <memory>

namespace leddam {
namespace {

struct GroupShape {
    std::size_t groups;
    std::size_t head_dim;
};

GroupShape validate_layout(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionLayout& l) {
    if (l.query_rows == 0 || l.key_rows == 0 || l.n_heads == 0) {
        throw ConfigError("attention layout counts must be positive");
    }
    if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows()) {
        throw DimensionError("attention: incompatible Q/K/V shapes " + q.shape_string() + ", " + k.shape_string() +
                             ", " + v.shape_string());
    }
    if (q.cols() % l.n_heads != 0) {
        throw DimensionError("attention: width " + std::to_string(q.cols()) + " not divisible by " +
                             std::to_string(l.n_heads) + " heads");
    }
    if (q.rows() % l.query_rows != 0 || k.rows() % l.key_rows != 0 ||
        q.rows() / l.query_rows != k.rows() / l.key_rows) {
        throw DimensionError("attention: query rows " + std::to_string(q.rows()) + " and key rows " +
                             std::to_string(k.rows()) + " do not form matching groups");
    }
    return {q.rows() / l.query_rows, q.cols() / l.n_heads};
}

// Probabilities are stored contiguously: block (g, h) is nq x nk.
struct AttentionCache {
    AttentionLayout layout;
    GroupShape shape;
    std::vector<double> probs;
};

Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionLayout& l,
                         AttentionCache& cache) {
    const GroupShape s = validate_layout(q, k, v, l);
    const std::size_t nq = l.query_rows;
    const std::size_t nk = l.key_rows;
    const std::size_t dk = s.head_dim;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    cache.layout = l;
    cache.shape = s;
    cache.probs.assign(s.groups * l.n_heads * nq * nk, 0.0);
    Matrix out(q.rows(), q.cols());
    Matrix scores(nq, nk);
    for (std::size_t g = 0; g < s.groups; ++g) {
        for (std::size_t h = 0; h < l.n_heads; ++h) {
            const std::size_t c0 = h * dk;
            for (std::size_t i = 0; i < nq; ++i) {
                const double* qi = q.row(g * nq + i).data() + c0;
                for (std::size_t j = 0; j < nk; ++j) {
                    const double* kj = k.row(g * nk + j).data() + c0;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dk; ++c) dot += qi[c] * kj[c];
                    scores(i, j) = dot * inv_sqrt;
                }
            }
            const Matrix p = ops::softmax_rows(scores);
            double* pdst = cache.probs.data() + (g * l.n_heads + h) * nq * nk;
            std::copy(p.data().begin(), p.data().end(), pdst);
            for (std::size_t i = 0; i < nq; ++i) {
                double* oi = out.row(g * nq + i).data() + c0;
                for (std::size_t j = 0; j < nk; ++j) {
                    const double pij = p(i, j);
                    const double* vj = v.row(g * nk + j).data() + c0;
                    for (std::size_t c = 0; c < dk; ++c) oi[c] += pij * vj[c];
                }
            }
        }
    }
    return out;
}

struct BlockVars {
    ad::Var wq, bq, wk, bk, wv, bv, w1, b1, w2, b2, g1, be1, g2, be2;
};

BlockVars bind(ad::Tape& t, const EncoderBlockParams& p) {
    return {t.param(*p.wq), t.param(*p.bq), t.param(*p.wk), t.param(*p.bk), t.param(*p.wv),
            t.param(*p.bv), t.param(*p.w1), t.param(*p.b1), t.param(*p.w2), t.param(*p.b2),
            t.param(*p.ln1_gamma), t.param(*p.ln1_beta), t.param(*p.ln2_gamma), t.param(*p.ln2_beta)};
}

ad::Var affine(ad::Var x, ad::Var w, ad::Var b) { return ad::add_rows(ad::matmul(x, w), b); }

// Shared tail of both blocks: attention over `memory` for every query row,
// then the residual / layer-norm / FFN stack.
ad::Var encoder_block(ad::Var queries, ad::Var memory, const AttentionLayout& layout, const EncoderBlockParams& p,
                      const ad::Context& ctx) {
    ad::Tape& t = *queries.tape;
    const BlockVars b = bind(t, p);
    ad::Var q = affine(queries, b.wq, b.bq);
    ad::Var k = affine(memory, b.wk, b.bk);
    ad::Var v = affine(memory, b.wv, b.bv);
    ad::Var attn = ad::dropout(ad::grouped_attention(q, k, v, layout), p.dropout, ctx);
    ad::Var h = ad::layer_norm(ad::add(queries, attn), b.g1, b.be1);
    ad::Var ff = ad::dropout(ad::relu(affine(h, b.w1, b.b1)), p.dropout, ctx);
    ff = affine(ff, b.w2, b.b2);
    return ad::layer_norm(ad::add(ff, h), b.g2, b.be2);
}

void require_block_input(const Matrix& x, const EncoderBlockParams& p) {
    if (x.cols() != p.model_dim()) {
        throw DimensionError("encoder block expects width " + std::to_string(p.model_dim()) + ", got input " +
                             x.shape_string());
    }
}

} // namespace

EncoderBlockParams register_encoder_block(ParamStore& store, const std::string& prefix, std::size_t dim,
                                          std::size_t ff_dim, std::size_t n_heads, double dropout,
                                          std::mt19937_64& rng) {
    if (dim == 0 || n_heads == 0 || dim % n_heads != 0) {
        throw ConfigError("encoder width " + std::to_string(dim) + " must be a positive multiple of " +
                          std::to_string(n_heads) + " heads");
    }
    if (ff_dim < dim) throw ConfigError("feed-forward width must be at least the model width");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    EncoderBlockParams p;
    p.wq = &store.add(prefix + "wq", init::uniform_fan_in(dim, dim, rng));
    p.bq = &store.add(prefix + "bq", Matrix(1, dim));
    p.wk = &store.add(prefix + "wk", init::uniform_fan_in(dim, dim, rng));
    p.bk = &store.add(prefix + "bk", Matrix(1, dim));
    p.wv = &store.add(prefix + "wv", init::uniform_fan_in(dim, dim, rng));
    p.bv = &store.add(prefix + "bv", Matrix(1, dim));
    p.w1 = &store.add(prefix + "ffn.w1", init::uniform_fan_in(dim, ff_dim, rng));
    p.b1 = &store.add(prefix + "ffn.b1", Matrix(1, ff_dim));
    p.w2 = &store.add(prefix + "ffn.w2", init::uniform_fan_in(ff_dim, dim, rng));
    p.b2 = &store.add(prefix + "ffn.b2", Matrix(1, dim));
    p.ln1_gamma = &store.add(prefix + "ln1.gamma", Matrix(1, dim, 1.0));
    p.ln1_beta = &store.add(prefix + "ln1.beta", Matrix(1, dim));
    p.ln2_gamma = &store.add(prefix + "ln2.gamma", Matrix(1, dim, 1.0));
    p.ln2_beta = &store.add(prefix + "ln2.beta", Matrix(1, dim));
    p.n_heads = n_heads;
    p.dropout = dropout;
    return p;
}

std::size_t AutoRegConfig::token_count(std::size_t dim) const {
    if (step < 1 || step > dim) {
        throw ConfigError("auto-regressive step L=" + std::to_string(step) + " must lie in [1, " +
                          std::to_string(dim) + "]");
    }
    return dim / step;
}

Matrix make_autoregressive_tokens(std::span<const double> x, std::size_t step) {
    const std::size_t d = x.size();
    const std::size_t m = AutoRegConfig{step}.token_count(d);
    Matrix s(m, d);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t shift = j * step;
        for (std::size_t c = 0; c < d; ++c) s(j, c) = x[(c + shift) % d];
    }
    return s;
}

Matrix grouped_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionLayout& layout,
                         std::vector<Matrix>* probs) {
    AttentionCache cache;
    Matrix out = attention_forward(q, k, v, layout, cache);
    if (probs != nullptr) {
        const std::size_t block = layout.query_rows * layout.key_rows;
        probs->clear();
        for (std::size_t b = 0; b * block < cache.probs.size(); ++b) {
            probs->emplace_back(layout.query_rows, layout.key_rows,
                                std::vector<double>(cache.probs.begin() + static_cast<std::ptrdiff_t>(b * block),
                                                    cache.probs.begin() + static_cast<std::ptrdiff_t>((b + 1) * block)));
        }
    }
    return out;
}

Matrix channel_attention_block(const Matrix& x, const EncoderBlockParams& p, bool training, std::mt19937_64* rng) {
    require_block_input(x, p);
    ad::Tape t;
    return ad::channel_attention_block(t.constant(x), x.rows(), p, ad::Context{training, rng}).value();
}

Matrix autoreg_attention_block(const Matrix& x, const EncoderBlockParams& p, const AutoRegConfig& cfg, bool training,
                               std::mt19937_64* rng) {
    if (x.rows() != 1) throw DimensionError("autoreg_attention_block expects a 1xD row, got " + x.shape_string());
    return intra_series_forward(x, p, cfg, training, rng);
}

Matrix intra_series_forward(const Matrix& x, const EncoderBlockParams& p, const AutoRegConfig& cfg, bool training,
                            std::mt19937_64* rng) {
    require_block_input(x, p);
    ad::Tape t;
    return ad::intra_series_forward(t.constant(x), p, cfg, ad::Context{training, rng}).value();
}

namespace ad {

Var grouped_attention(Var q, Var k, Var v, const AttentionLayout& layout) {
    Tape& t = *q.tape;
    auto cache = std::make_shared<AttentionCache>();
    Matrix out = attention_forward(q.value(), k.value(), v.value(), layout, *cache);
    return t.record(std::move(out), {q, k, v}, [q, k, v, cache](Tape& t, const Matrix& g) {
        const Matrix& qv = t.value(q);
        const Matrix& kv = t.value(k);
        const Matrix& vv = t.value(v);
        Matrix* dq = t.grad_buffer(q);
        Matrix* dk = t.grad_buffer(k);
        Matrix* dv = t.grad_buffer(v);
        const AttentionLayout& l = cache->layout;
        const std::size_t nq = l.query_rows;
        const std::size_t nk = l.key_rows;
        const std::size_t hd = cache->shape.head_dim;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        Matrix p(nq, nk);
        Matrix dp(nq, nk);
        for (std::size_t grp = 0; grp < cache->shape.groups; ++grp) {
            for (std::size_t h = 0; h < l.n_heads; ++h) {
                const std::size_t c0 = h * hd;
                const double* src = cache->probs.data() + (grp * l.n_heads + h) * nq * nk;
                std::copy(src, src + nq * nk, p.data().begin());
                for (std::size_t i = 0; i < nq; ++i) {
                    const double* gi = g.row(grp * nq + i).data() + c0;
                    for (std::size_t j = 0; j < nk; ++j) {
                        const double* vj = vv.row(grp * nk + j).data() + c0;
                        double dot = 0.0;
                        for (std::size_t c = 0; c < hd; ++c) dot += gi[c] * vj[c];
                        dp(i, j) = dot;
                        if (dv != nullptr) {
                            double* dvj = (*dv).row(grp * nk + j).data() + c0;
                            const double pij = p(i, j);
                            for (std::size_t c = 0; c < hd; ++c) dvj[c] += pij * gi[c];
                        }
                    }
                }
                const Matrix ds = ops::softmax_rows_backward(p, dp);
                for (std::size_t i = 0; i < nq; ++i) {
                    const double* qi = qv.row(grp * nq + i).data() + c0;
                    for (std::size_t j = 0; j < nk; ++j) {
                        const double s = ds(i, j) * inv_sqrt;
                        const double* kj = kv.row(grp * nk + j).data() + c0;
                        if (dq != nullptr) {
                            double* dqi = &(*dq)(grp * nq + i, c0);
                            for (std::size_t c = 0; c < hd; ++c) dqi[c] += s * kj[c];
                        }
                        if (dk != nullptr) {
                            double* dkj = &(*dk)(grp * nk + j, c0);
                            for (std::size_t c = 0; c < hd; ++c) dkj[c] += s * qi[c];
                        }
                    }
                }
            }
        }
    });
}

Var rotation_tokens(Var x, std::size_t step) {
    Tape& t = *x.tape;
    const Matrix& xv = x.value();
    const std::size_t d = xv.cols();
    const std::size_t m = AutoRegConfig{step}.token_count(d);
    Matrix out(xv.rows() * m, d);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        const Matrix s = make_autoregressive_tokens(xv.row(r), step);
        std::copy(s.data().begin(), s.data().end(), out.row(r * m).begin());
    }
    return t.record(std::move(out), {x}, [x, step, m](Tape& t, const Matrix& g) {
        Matrix* dx = t.grad_buffer(x);
        if (dx == nullptr) return;
        const std::size_t d = dx->cols();
        for (std::size_t r = 0; r < dx->rows(); ++r) {
            for (std::size_t j = 0; j < m; ++j) {
                auto gr = g.row(r * m + j);
                for (std::size_t c = 0; c < d; ++c) (*dx)(r, (c + j * step) % d) += gr[c];
            }
        }
    });
}

Var channel_attention_block(Var x, std::size_t channels, const EncoderBlockParams& p, const Context& ctx) {
    require_block_input(x.value(), p);
    if (channels == 0 || x.value().rows() % channels != 0) {
        throw DimensionError("channel attention: " + std::to_string(x.value().rows()) + " rows are not a multiple of " +
                             std::to_string(channels) + " channels");
    }
    return encoder_block(x, x, AttentionLayout{channels, channels, p.n_heads}, p, ctx);
}

Var intra_series_forward(Var x, const EncoderBlockParams& p, const AutoRegConfig& cfg, const Context& ctx) {
    require_block_input(x.value(), p);
    const std::size_t m = cfg.token_count(x.value().cols());
    Var tokens = rotation_tokens(x, cfg.step);
    return encoder_block(x, tokens, AttentionLayout{1, m, p.n_heads}, p, ctx);
}

} // namespace ad
} // namespace leddam
