#include "locrank/optim.hpp"

#include <algorithm>

#include "locrank/errors.hpp"
#include "locrank/ops.hpp"

namespace locrank {

double OptimState::multiplier_for(const std::string& path) const {
    for (const auto& [pattern, mult] : lr_multipliers) {
        if (!pattern.empty() && pattern.back() == '*') {
            if (path.compare(0, pattern.size() - 1, pattern, 0, pattern.size() - 1) == 0)
                return mult;
        } else if (path == pattern) {
            return mult;
        }
    }
    return 1.0;
}

OptimState make_optim_state(double lr_rn, double lr_stn, double momentum) {
    OptimState st;
    st.base_lr = lr_rn;
    st.momentum = momentum;
    if (lr_rn > 0) st.lr_multipliers.emplace_back("stn.*", lr_stn / lr_rn);
    return st;
}

void sgd_step(ModelParams& params, const GradMap& grads, OptimState& state) {
    for (auto& [name, grad] : grads) {
        Tensor& p = params.at(name);
        if (!p.same_shape(grad))
            throw RuntimeFailure("sgd_step: gradient shape " + grad.shape_str() +
                                 " does not match parameter " + name + " " + p.shape_str());
        Tensor& vel = state.velocity.try_emplace(name, Tensor(p.shape)).first->second;
        const double lr = state.base_lr * state.multiplier_for(name);
        for (int i = 0; i < p.numel(); ++i) {
            vel.at(i) = state.momentum * vel.at(i) - lr * grad.at(i);
            p.at(i) += vel.at(i);
        }
    }

    if (params.has("stn.fc2.bias")) {
        Tensor& bias = params.at("stn.fc2.bias");
        const double lo = ops::softplus_inv(params.arch.s_min);
        const double hi = ops::softplus_inv(params.arch.s_max);
        bias.at(0) = std::clamp(bias.at(0), lo, hi);
    }
}

}  // namespace locrank
