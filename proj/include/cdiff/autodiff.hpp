#pragma once

#include <functional>
#include <vector>

#include "cdiff/tensor.hpp"

namespace cdiff {

// Handle into a Tape.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode autodiff tape. Ops are recorded in topological order (inputs
// always precede their consumers) and backward() performs a single reverse
// sweep, visiting each recorded op exactly once. After backward the recorded
// ops are dropped; the tape cannot record or backpropagate again.
//
// A tape is single-threaded. Independent tapes may run concurrently.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf without gradient.
    Var constant(Tensor value);
    // Leaf whose gradient is readable via grad() after backward.
    Var input(Tensor value, bool requires_grad = true);
    // Leaf bound to an external tensor; backward accumulates into its grad()
    // when the tensor has requires_grad set.
    Var param(Tensor& external);

    enum class Elementwise { add, sub, mul, div };
    Var elementwise(Elementwise op, Var a, Var b);
    Var elementwise(Elementwise op, Var a, float b);

    Var add(Var a, Var b) { return elementwise(Elementwise::add, a, b); }
    Var sub(Var a, Var b) { return elementwise(Elementwise::sub, a, b); }
    Var mul(Var a, Var b) { return elementwise(Elementwise::mul, a, b); }
    Var div(Var a, Var b) { return elementwise(Elementwise::div, a, b); }
    Var add_scalar(Var a, float s) { return elementwise(Elementwise::add, a, s); }
    Var mul_scalar(Var a, float s) { return elementwise(Elementwise::mul, a, s); }

    // x[N,C,H,W] cross-correlated with w[F,C,k,k] (odd k, zero padding k/2,
    // stride 1) plus per-filter bias[F]; spatial dims preserved.
    Var conv2d(Var x, Var w, Var bias);
    // x[N,I] * w[O,I]^T + b[O].
    Var linear(Var x, Var w, Var bias);
    // table[R,E] -> [rows.size(),E].
    Var gather_rows(Var table, std::vector<int> rows);
    // x[N,C,H,W] + s[N,C] broadcast over the spatial dims.
    Var add_channel(Var x, Var s);
    // 2x2 mean pooling, stride 2; spatial dims must be even.
    Var avg_pool2(Var x);
    // Nearest-neighbour 2x upsampling.
    Var upsample2(Var x);
    // [N,C,H,W] -> [N,C] spatial mean.
    Var global_avg_pool(Var x);

    Var sum(Var x);
    Var mean(Var x);
    Var silu(Var x);
    Var relu(Var x);
    // Log-softmax over the last axis.
    Var log_softmax(Var x);
    // Mean negative log-likelihood of the given class per row.
    Var nll(Var log_probs, std::vector<int> labels);

    const Tensor& value(Var v) const;
    // Gradient buffer of a node after backward(); zeros-sized if the node was
    // never reached by the sweep.
    const std::vector<float>& grad(Var v) const;

    // Seeds d(loss)=1 and sweeps the tape once in reverse. `loss` must be
    // scalar. Recorded ops are released afterwards.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor value;
        std::vector<float> grad;
        std::function<void()> backprop;
        Tensor* bound = nullptr;
        bool needs_grad = false;
    };

    int emit(Tensor value, bool needs_grad, const char* op_name);
    std::vector<float>& grad_buf(int idx);
    bool node_needs(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].needs_grad; }
    const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)].value; }
    void check_open(const char* op_name) const;
    void check_var(Var v, const char* op_name) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

} // namespace cdiff
