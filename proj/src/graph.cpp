#include "locrank/graph.hpp"

#include <utility>

#include "locrank/errors.hpp"

namespace locrank {

Value Graph::leaf(Tensor t, bool needs_grad) {
    NodeRec r;
    r.value = std::move(t);
    r.needs = needs_grad;
    if (needs_grad) r.grad = Tensor(r.value.shape);
    nodes_.push_back(std::move(r));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Graph::node(Tensor value, const std::vector<Value>& parents, BackFn back) {
    bool needs = false;
    for (Value p : parents)
        if (rec(p).needs) needs = true;
    NodeRec r;
    r.value = std::move(value);
    r.needs = needs;
    if (needs) {
        r.grad = Tensor(r.value.shape);
        r.back = std::move(back);
    }
    nodes_.push_back(std::move(r));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad(Value v) {
    NodeRec& r = rec(v);
    if (!r.needs) throw UsageError("grad() on a node that does not track gradients");
    return r.grad;
}

const Tensor& Graph::grad(Value v) const {
    const NodeRec& r = rec(v);
    if (!r.needs) throw UsageError("grad() on a node that does not track gradients");
    return r.grad;
}

void Graph::accum(Value parent, const Tensor& g) {
    NodeRec& r = rec(parent);
    if (!r.needs) return;
    double* dst = r.grad.data.data();
    const double* src = g.data.data();
    const size_t n = g.data.size();
    for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void Graph::accum_at(Value parent, int index, double g) {
    NodeRec& r = rec(parent);
    if (!r.needs) return;
    r.grad.data[static_cast<size_t>(index)] += g;
}

void Graph::backward(Value root, double seed) {
    NodeRec& rt = rec(root);
    if (rt.value.numel() != 1) throw UsageError("backward() root must be scalar");
    if (!rt.needs) return;
    rt.grad.data[0] += seed;
    for (int i = root.id; i >= 0; --i) {
        NodeRec& r = nodes_[static_cast<size_t>(i)];
        if (r.needs && r.back) r.back(*this, r.grad);
    }
}

void Graph::zero_grad() {
    for (NodeRec& r : nodes_)
        if (r.needs) r.grad.fill(0.0);
}

void Graph::check_finite() const {
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const NodeRec& r = nodes_[i];
        if (!r.value.all_finite())
            throw RuntimeFailure("non-finite value at graph node " + std::to_string(i));
        if (r.needs && !r.grad.all_finite())
            throw RuntimeFailure("non-finite gradient at graph node " + std::to_string(i));
    }
}

}  // namespace locrank
