#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace kds::tensor {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One node of the reverse-mode graph. Values are flat row-major over `shape`.
// backward_fn reads this node's grad and accumulates into the parents' grads;
// node ids grow with creation order, which is the topological order we replay
// in reverse.
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
    std::size_t last_dim() const { return shape.empty() ? 1 : shape.back(); }
    std::size_t lead() const { return numel() / last_dim(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), 0.0);
    }
};

NodePtr leaf(std::vector<std::size_t> shape, std::vector<double> values,
             bool requires_grad = false);
NodePtr zeros(std::vector<std::size_t> shape, bool requires_grad = false);

// raw node with value buffer allocated; caller fills value and backward_fn
NodePtr make_node(std::vector<std::size_t> shape, std::vector<NodePtr> parents);

// elementwise
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double c);
NodePtr sigmoid(const NodePtr& a);
NodePtr tanh_(const NodePtr& a);
NodePtr relu(const NodePtr& a);

// x:[...,C] treated as (lead x C); returns x·W^T + b with W:[Co,C], b:[Co]
NodePtr linear(const NodePtr& x, const NodePtr& w, const NodePtr& b);
NodePtr matmul(const NodePtr& a, const NodePtr& b);  // [m,k]·[k,n]

// last-dimension structure
NodePtr slice_last(const NodePtr& x, std::size_t start, std::size_t len);
NodePtr concat_last(const NodePtr& a, const NodePtr& b);
NodePtr softmax_last(const NodePtr& x);
NodePtr layer_norm(const NodePtr& x, const NodePtr& gain, const NodePtr& bias,
                   double eps = 1e-5);

// time axis ops on [B,W,C]
NodePtr mean_time(const NodePtr& x);
NodePtr time_step(const NodePtr& x, std::size_t t);
NodePtr add_time_bias(const NodePtr& x, const NodePtr& pe);  // pe:[W,C]

// batched matmul on [B,m,k]
NodePtr bmm(const NodePtr& a, const NodePtr& b);     // ·[B,k,n]
NodePtr bmm_nt(const NodePtr& a, const NodePtr& b);  // ·[B,n,k]^T

enum class PadMode { causal, circular };

// x:[B,W,Ci], w:[Co,Ci*K], b:[Co]; stride 1, length-preserving
NodePtr conv1d(const NodePtr& x, const NodePtr& w, const NodePtr& b, std::size_t kernel,
               std::size_t dilation, PadMode mode);

// fused recurrent cells (PyTorch gate conventions); xp carries the
// precomputed input projection for the step
NodePtr gru_cell(const NodePtr& xp, const NodePtr& h_prev, const NodePtr& w_hh,
                 const NodePtr& b_hh);
// hc packs [h|c]; output likewise
NodePtr lstm_cell(const NodePtr& xp, const NodePtr& hc_prev, const NodePtr& w_hh,
                  const NodePtr& b_hh);

void backward(const NodePtr& root);

}  // namespace kds::tensor
