#include "locrank/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "locrank/errors.hpp"

namespace locrank {

namespace {

double eval_scalar(const ProbeBuilder& build, const Tensor& param) {
    Graph g;
    GradProbe p = build(g, param);
    if (g.val(p.root).numel() != 1) throw UsageError("grad_check: subgraph output must be scalar");
    return g.val(p.root).at(0);
}

}  // namespace

double grad_check(const Tensor& param, const ProbeBuilder& build, double step) {
    if (!(step > 0)) throw UsageError("grad_check: step must be positive");

    Graph g;
    GradProbe probe = build(g, param);
    if (g.val(probe.root).numel() != 1)
        throw UsageError("grad_check: subgraph output must be scalar");
    g.backward(probe.root);
    const Tensor analytic = g.grad(probe.param);

    double worst = 0.0;
    Tensor perturbed = param;
    for (int i = 0; i < param.numel(); ++i) {
        const double saved = perturbed.at(i);
        perturbed.at(i) = saved + step;
        const double fp = eval_scalar(build, perturbed);
        perturbed.at(i) = saved - step;
        const double fm = eval_scalar(build, perturbed);
        perturbed.at(i) = saved;

        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic.at(i);
        const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace locrank
