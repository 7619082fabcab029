#pragma once

#include <functional>
#include <vector>

#include "locrank/tensor.hpp"

namespace locrank {

class Graph;

// Handle into a Graph's tape.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Backward rule of one node: given the node's accumulated output gradient,
// scatter contributions into the parents' grad buffers.
using BackFn = std::function<void(Graph&, const Tensor& gout)>;

// Reverse-mode tape. Nodes are appended during the forward pass, so creation
// order is a topological order and backward() is a single reverse sweep.
// Gradients accumulate additively when a value feeds several consumers.
//
// One Graph is single-writer: never run forward construction and backward
// concurrently on the same instance. Distinct graphs over shared read-only
// parameter tensors are safe in parallel.
class Graph {
public:
    Value leaf(Tensor t, bool needs_grad);
    Value node(Tensor value, const std::vector<Value>& parents, BackFn back);

    const Tensor& val(Value v) const { return rec(v).value; }
    // Gradient buffer; only valid for needs-grad nodes.
    Tensor& grad(Value v);
    const Tensor& grad(Value v) const;
    bool needs_grad(Value v) const { return rec(v).needs; }

    // Adds `delta`-scaled tensor into a parent's gradient if it wants one.
    void accum(Value parent, const Tensor& g);
    void accum_at(Value parent, int index, double g);
    // Raw gradient buffer for hot backward loops; nullptr when the parent
    // does not track gradients.
    double* grad_buf(Value parent) {
        NodeRec& r = rec(parent);
        return r.needs ? r.grad.data.data() : nullptr;
    }

    // Reverse sweep from a scalar root, seeding its gradient with `seed`.
    void backward(Value root, double seed = 1.0);
    void zero_grad();
    // Hard error (RuntimeFailure) if any value or gradient is NaN/Inf.
    void check_finite() const;

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct NodeRec {
        Tensor value;
        Tensor grad;
        bool needs = false;
        BackFn back;
    };
    NodeRec& rec(Value v) { return nodes_[static_cast<size_t>(v.id)]; }
    const NodeRec& rec(Value v) const { return nodes_[static_cast<size_t>(v.id)]; }

    std::vector<NodeRec> nodes_;
};

}  // namespace locrank
