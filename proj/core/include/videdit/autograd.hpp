#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "videdit/tensor.hpp"

namespace videdit::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily when the first gradient arrives
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward;

    Tensor& g() {
        if (grad.empty()) grad = Tensor::zeros(val.shape());
        return grad;
    }
    bool has_grad() const { return !grad.empty(); }
};

// Tape-style graph. Ops append nodes in creation order, which is a valid
// topological order, so backward() is a single reverse sweep. One Graph per
// forward/backward pair; drop it to free all intermediates.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled(grad_enabled) {}

    bool grad_enabled;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Create an op node. `bw` reads node.grad and accumulates into parents.
    Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw);

    void backward(const Var& root);

    size_t tape_size() const { return tape_.size(); }

private:
    std::vector<Var> tape_;
};

// ---- elementwise / linear algebra ops ----

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
// sa*a + sb*b, shapes equal
Var add_scaled(Graph& g, Var a, double sa, Var b, double sb);
Var silu(Graph& g, Var x);

// C = op(A) * op(B), 2-D matrices
Var matmul(Graph& g, Var a, Var b, bool trans_a = false, bool trans_b = false);
// y = x*w + bias row-broadcast; x:[N,din], w:[din,dout], b:[dout] (b may be null)
Var affine(Graph& g, Var x, Var w, Var b);

// rows of `table` selected by ids; backward scatters
Var gather_rows(Graph& g, Var table, std::vector<int> ids);

// ---- image ops (NCHW) ----

Var conv2d(Graph& g, Var x, Var w, Var b, int stride, int pad);
Var upsample_nearest2x(Graph& g, Var x);
Var concat_channels(Graph& g, Var a, Var b);
// x:[B,C,H,W] plus per-sample channel bias rows [B,C]
Var add_channel_bias(Graph& g, Var x, Var bias_rows);
Var group_norm(Graph& g, Var x, Var gamma, Var beta, int groups, double eps = 1e-5);

// mean((pred - target)^2), scalar output
Var mse_loss(Graph& g, Var pred, const Tensor& target);

// ---- value-level kernels shared with inference paths ----

// out = op(A)*op(B) with accumulate flag; via Eigen
void gemm(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& out, bool accumulate = false,
          double alpha = 1.0);
// in-place row softmax with max subtraction; [n,m]
void softmax_rows(Tensor& t);
// dS = A ⊙ (dA - rowsum(dA ⊙ A)), all [n,m]
void softmax_rows_backward(const Tensor& a, const Tensor& da, Tensor& ds);

}  // namespace videdit::ag
