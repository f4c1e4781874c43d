#include "leddam/autodiff.hpp"

#include "leddam/errors.hpp"
#include "leddam/ops.hpp"

#include <memory>

namespace leddam::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, {}, nullptr});
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(ParamTensor& p) {
    nodes_.push_back(Node{p.value, {}, false, p.trainable, {}, p.trainable ? &p : nullptr});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool rg = false;
    for (const Var& v : inputs) {
        if (v.tape != this) throw PreconditionError("tape: input belongs to a different tape");
        rg = rg || nodes_[v.id].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, false, rg, rg ? std::move(backward) : Backward{}, nullptr});
    return Var{this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    require_same_shape(n.value, g, "gradient accumulation");
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

Matrix* Tape::grad_buffer(Var v) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (!n.has_grad) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return &n.grad;
}

const Matrix* Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
    Node& root = nodes_[loss.id];
    if (root.value.rows() != 1 || root.value.cols() != 1) {
        throw DimensionError("backward: loss must be 1x1, got " + root.value.shape_string());
    }
    accumulate(loss, Matrix(1, 1, 1.0));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) {
            Matrix& pg = n.param->grad;
            if (!pg.same_shape(n.grad)) pg = Matrix(n.grad.rows(), n.grad.cols());
            for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        }
    }
}

Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    return t.record(ops::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, ops::matmul_nt(g, t.value(b)));
        if (t.requires_grad(b)) t.accumulate(b, ops::matmul_tn(t.value(a), g));
    });
}

Var add(Var a, Var b) {
    Tape& t = *a.tape;
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    require_same_shape(av, bv, "add");
    Matrix out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = *a.tape;
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    require_same_shape(av, bv, "sub");
    Matrix out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) {
            Matrix neg = g;
            for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
            t.accumulate(b, neg);
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return t.record(std::move(out), {a}, [a, s](Tape& t, const Matrix& g) {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s;
        t.accumulate(a, d);
    });
}

Var add_rows(Var a, Var b) {
    Tape& t = *a.tape;
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (bv.cols() != av.cols() || bv.rows() == 0 || av.rows() % bv.rows() != 0) {
        throw DimensionError("add_rows: cannot broadcast " + bv.shape_string() + " over " + av.shape_string());
    }
    Matrix out = av;
    const std::size_t period = bv.rows();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto dst = out.row(r);
        auto src = bv.row(r % period);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    return t.record(std::move(out), {a, b}, [a, b, period](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (Matrix* db = t.grad_buffer(b)) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto src = g.row(r);
                auto dst = db->row(r % period);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
            }
        }
    });
}

Var relu(Var x) {
    Tape& t = *x.tape;
    return t.record(ops::relu(x.value()), {x},
                    [x](Tape& t, const Matrix& g) { t.accumulate(x, ops::relu_backward(t.value(x), g)); });
}

Var softmax_rows(Var x) {
    Tape& t = *x.tape;
    auto y = std::make_shared<Matrix>(ops::softmax_rows(x.value()));
    return t.record(Matrix(*y), {x}, [x, y](Tape& t, const Matrix& g) {
        t.accumulate(x, ops::softmax_rows_backward(*y, g));
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape& t = *x.tape;
    auto cache = std::make_shared<ops::LayerNormCache>();
    Matrix y = ops::layer_norm(x.value(), gamma.value().data(), beta.value().data(), eps, cache.get());
    return t.record(std::move(y), {x, gamma, beta}, [x, gamma, beta, cache](Tape& t, const Matrix& g) {
        auto grads = ops::layer_norm_backward(g, t.value(gamma).data(), *cache);
        t.accumulate(x, grads.dx);
        t.accumulate(gamma, grads.dgamma);
        t.accumulate(beta, grads.dbeta);
    });
}

Var dropout(Var x, double rate, const Context& ctx) {
    if (!ctx.training || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be below 1");
    if (ctx.rng == nullptr) throw PreconditionError("dropout in training mode needs a generator");
    Tape& t = *x.tape;
    const Matrix& xv = x.value();
    auto mask = std::make_shared<Matrix>(xv.rows(), xv.cols());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        (*mask)[i] = u(*ctx.rng) >= rate ? keep_scale : 0.0;
        out[i] = xv[i] * (*mask)[i];
    }
    return t.record(std::move(out), {x}, [x, mask](Tape& t, const Matrix& g) {
        Matrix d = g;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= (*mask)[i];
        t.accumulate(x, d);
    });
}

Var mse_loss(Var pred, const Matrix& target) {
    Tape& t = *pred.tape;
    const double loss = ops::mse_loss(pred.value(), target);
    auto tgt = std::make_shared<Matrix>(target);
    return t.record(Matrix(1, 1, loss), {pred}, [pred, tgt](Tape& t, const Matrix& g) {
        t.accumulate(pred, ops::mse_loss_backward(t.value(pred), *tgt, g[0]));
    });
}

Var sum(Var x) {
    Tape& t = *x.tape;
    const Matrix& xv = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
    return t.record(Matrix(1, 1, s), {x}, [x](Tape& t, const Matrix& g) {
        const Matrix& xv = t.value(x);
        t.accumulate(x, Matrix(xv.rows(), xv.cols(), g[0]));
    });
}

Var mean_of(const std::vector<Var>& xs) {
    if (xs.empty()) throw PreconditionError("mean_of: no inputs");
    if (xs.size() == 1) return xs.front();
    Var acc = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

} // namespace leddam::ad
