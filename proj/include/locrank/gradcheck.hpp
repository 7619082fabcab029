#pragma once

#include <functional>

#include "locrank/graph.hpp"

namespace locrank {

// A rebuildable scalar subgraph for finite-difference checking: given a fresh
// graph and the current parameter values, construct the forward pass and
// return the scalar root plus the leaf the parameter was bound to.
struct GradProbe {
    Value root;
    Value param;
};
using ProbeBuilder = std::function<GradProbe(Graph&, const Tensor& param)>;

// Central-difference check of d(root)/d(param). Perturbs every entry of
// `param` by +/-step, rebuilds the subgraph, and compares against the
// analytic gradient from one backward pass. Returns the max over entries of
// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
double grad_check(const Tensor& param, const ProbeBuilder& build, double step);

}  // namespace locrank
