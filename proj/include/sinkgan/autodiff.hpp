#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "sinkgan/tensor.hpp"

namespace sinkgan {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    /// Accumulated gradient after Tape::backward; zeros if unreachable.
    Tensor grad() const;
};

/// Reverse-mode tape. Nodes are recorded in forward execution order, which is
/// a topological order by construction, so the backward pass is a reverse
/// sweep. A tape is single-writer: one training step per instance.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&)>;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Record a node. Parents must already be on this tape (acyclicity).
    Var record(Tensor value, std::vector<int> parents, BackwardFn backward);

    /// Reverse sweep from a scalar loss. ContractError if loss is not scalar.
    void backward(const Var& loss);

    const Tensor& val(int id) const { return nodes_[id].value; }
    bool needs_grad(int id) const { return nodes_[id].requires_grad; }
    bool has_grad(int id) const { return !nodes_[id].grad.empty(); }
    /// Gradient accumulator, allocated as zeros on first touch.
    Tensor& grad_acc(int id);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<int> parents;
        BackwardFn backward;
    };
    // deque: node references stay valid while the tape grows.
    std::deque<Node> nodes_;
};

// Elementwise (shapes must match exactly unless noted).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);
// Broadcast a scalar-shaped Var over a tensor.
Var add_scalar_var(const Var& a, const Var& s);
Var mul_scalar_var(const Var& a, const Var& s);
Var div_scalar_var(const Var& a, const Var& s);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var matmul(const Var& a, const Var& b);
/// a is a constant matrix of the forward graph; gradient flows through x only.
Var matmul_const(const Tensor& a, const Var& x);
Var transpose(const Var& a);

/// x: [B,H,W,Ci], w: [kh,kw,Ci,Co] (odd kernels), optional bias [Co].
/// Stride 1, zero padding preserving spatial dims.
Var conv2d(const Var& x, const Var& w, const Var& bias);
Var conv2d(const Var& x, const Var& w);

/// k x k uniform local average per channel, zero-padded, same dims.
Var box_filter(const Var& x, size_t k);

/// x: [B,In] * w: [In,Out] + bias [Out] broadcast over rows.
Var linear(const Var& x, const Var& w, const Var& bias);
Var add_rowvec(const Var& x, const Var& b);

Var leaky_relu(const Var& a, double negative_slope = 0.2);
inline Var relu(const Var& a) { return leaky_relu(a, 0.0); }
Var sigmoid(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var clamp(const Var& a, double lo, double hi);

/// Row-wise, max-subtracted. Input must be 2-D.
Var softmax_rows(const Var& a);

Var mean(const Var& a);
Var sum(const Var& a);
Var sum_axis(const Var& a, size_t axis);
// Scalar extrema with subgradient routed to the first extremal element.
Var reduce_min(const Var& a);
Var reduce_max(const Var& a);

Var concat(const std::vector<Var>& parts, size_t axis);
Var slice(const Var& a, const std::vector<size_t>& offsets, const std::vector<size_t>& sizes);
Var reshape(const Var& a, std::vector<size_t> shape);

/// Bilinear resize of a 2-D map.
Var bilinear_resize(const Var& a, size_t out_h, size_t out_w);

/// [H,W,C] -> [N, h*w*C]: non-overlapping windows, row-major window order,
/// row-major flattening inside each window; zero-pads non-divisible dims.
Var patch_partition(const Var& x, size_t h, size_t w);
/// Exact inverse of patch_partition (pads dropped by cropping to H,W).
Var patch_merge(const Var& nodes, size_t h, size_t w, size_t out_h, size_t out_w, size_t channels);

// Same index maps as the tape ops, on plain values.
Tensor patch_partition_value(const Tensor& x, size_t h, size_t w);
Tensor patch_merge_value(const Tensor& nodes, size_t h, size_t w, size_t out_h, size_t out_w,
                         size_t channels);

}  // namespace sinkgan
