#pragma once

// Reverse-mode differentiation over a per-forward-pass operation tape.
//
// A Tape records every intermediate value together with a closure that pushes
// the node's upstream gradient into its inputs. Tapes are single-threaded and
// meant to be thrown away after one backward pass.

#include "leddam/matrix.hpp"
#include "leddam/params.hpp"

#include <deque>
#include <functional>
#include <initializer_list>
#include <random>

namespace leddam::ad {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix& upstream)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Leaf bound to a parameter; its gradient is added to `p.grad` by backward().
    /// Non-trainable parameters are treated as constants.
    Var param(ParamTensor& p);
    /// Records an op output. `backward` runs only if the output received a
    /// gradient and at least one input requires one.
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Adds `g` into the gradient of `v` (no-op when v needs no gradient).
    void accumulate(Var v, const Matrix& g);
    /// Zero-initialized gradient buffer of `v` for scatter-style accumulation,
    /// or nullptr when v needs no gradient.
    Matrix* grad_buffer(Var v);
    /// Gradient after backward(), or nullptr if none flowed into v.
    const Matrix* grad(Var v) const;

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
    /// reverse order. `loss` must be 1x1.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool has_grad = false;
        bool requires_grad = false;
        Backward backward;
        ParamTensor* param = nullptr;
    };

    std::deque<Node> nodes_;
};

/// Training-time switches threaded through a forward pass.
struct Context {
    bool training = false;
    std::mt19937_64* rng = nullptr; // required when training with dropout > 0
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// out[i,:] = a[i,:] + b[i mod b.rows, :]. Covers bias rows (b is 1xC) and
/// per-channel tables repeated over a batch.
Var add_rows(Var a, Var b);
Var relu(Var x);
Var softmax_rows(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Inverted dropout; identity when !ctx.training or rate == 0.
Var dropout(Var x, double rate, const Context& ctx);
/// Scalar (1x1) mean squared error against a constant target.
Var mse_loss(Var pred, const Matrix& target);
/// Scalar (1x1) sum of all entries.
Var sum(Var x);
/// Element-wise mean of several same-shape inputs.
Var mean_of(const std::vector<Var>& xs);

} // namespace leddam::ad
