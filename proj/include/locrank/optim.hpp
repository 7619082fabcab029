#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "locrank/model.hpp"
#include "locrank/tensor.hpp"

namespace locrank {

using GradMap = std::map<std::string, Tensor>;

// SGD with momentum and per-parameter-group learning-rate multipliers.
// Patterns are matched by prefix when they end in '*' (first match wins),
// exactly otherwise; unmatched parameters use multiplier 1.
struct OptimState {
    double base_lr = 0.001;
    double momentum = 0.9;
    std::vector<std::pair<std::string, double>> lr_multipliers;
    std::map<std::string, Tensor> velocity;

    double multiplier_for(const std::string& path) const;
};

// Standard state for this project: base_lr = lr_rn, "stn.*" scaled to
// lr_stn. The scale parameter's extra 0.1 lives in the graph (scale_grad),
// not here.
OptimState make_optim_state(double lr_rn, double lr_stn, double momentum);

// velocity <- momentum*velocity - lr*grad; param <- param + velocity.
// Afterwards the raw s bias of the theta head is clamped so the initial
// scale stays inside [s_min, s_max] even while its weights are zero.
void sgd_step(ModelParams& params, const GradMap& grads, OptimState& state);

}  // namespace locrank
