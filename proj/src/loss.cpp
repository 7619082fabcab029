#include "locrank/loss.hpp"

#include <cmath>

#include "locrank/errors.hpp"
#include "locrank/ops.hpp"

namespace locrank {

double rank_prob(double v1, double v2) { return ops::sigmoid_val(v1 - v2); }

double rank_loss(double v1, double v2, double L) {
    const double d = v1 - v2;
    return ops::softplus_val(-d) + (1.0 - L) * d;
}

double st_loss(const Theta& theta, int image_w, int image_h) {
    auto [cx, cy] = patch_center_px(theta, image_w, image_h);
    const double dx = (image_w - 1) / 2.0 - cx;
    const double dy = (image_h - 1) / 2.0 - cy;
    return dx * dx + dy * dy;
}

PairLossResult pair_loss(double v1, double v2, double L, const Theta& t1, const Theta& t2,
                         int image_w, int image_h, double st_weight) {
    PairLossResult r;
    r.prob = rank_prob(v1, v2);
    r.rank_component = rank_loss(v1, v2, L);
    r.st_1 = st_loss(t1, image_w, image_h);
    r.st_2 = st_loss(t2, image_w, image_h);
    auto [c1x, c1y] = patch_center_px(t1, image_w, image_h);
    auto [c2x, c2y] = patch_center_px(t2, image_w, image_h);
    r.lambda_1 = center_in_bounds(c1x, c1y, image_w, image_h) ? 0 : 1;
    r.lambda_2 = center_in_bounds(c2x, c2y, image_w, image_h) ? 0 : 1;
    r.total = (1 - r.lambda_1) * (1 - r.lambda_2) * r.rank_component +
              r.lambda_1 * st_weight * r.st_1 + r.lambda_2 * st_weight * r.st_2;
    return r;
}

double combined_loss(const std::vector<PairLossResult>& batch) {
    if (batch.empty()) throw UsageError("combined_loss: empty batch");
    double acc = 0.0;
    for (const PairLossResult& r : batch) acc += r.total;
    return acc / static_cast<double>(batch.size());
}

Value rank_loss_node(Graph& g, Value v1, Value v2, double L) {
    const double a = g.val(v1).at(0);
    const double b = g.val(v2).at(0);
    return g.node(Tensor::scalar(rank_loss(a, b, L)), {v1, v2},
                  [=](Graph& gg, const Tensor& gout) {
                      const double p = rank_prob(gg.val(v1).at(0), gg.val(v2).at(0));
                      gg.accum_at(v1, 0, gout.at(0) * (p - L));
                      gg.accum_at(v2, 0, gout.at(0) * (L - p));
                  });
}

Value st_loss_node(Graph& g, Value center, int image_w, int image_h) {
    using namespace ops;
    Tensor target({2});
    target.at(0) = (image_w - 1) / 2.0;
    target.at(1) = (image_h - 1) / 2.0;
    Value diff = sub(g, center, g.leaf(target, false));
    return sum(g, mul(g, diff, diff));
}

PairTerm pair_loss_node(Graph& g, const BranchNodes& b1, const BranchNodes& b2, double L,
                        int image_w, int image_h, double st_weight) {
    using namespace ops;
    PairTerm out;
    out.result = pair_loss(g.val(b1.v).at(0), g.val(b2.v).at(0), L, b1.theta, b2.theta, image_w,
                           image_h, st_weight);

    if (b1.in_bounds && b2.in_bounds) {
        out.term = rank_loss_node(g, b1.v, b2.v, L);
        return out;
    }
    Value acc;
    if (!b1.in_bounds) acc = scale(g, st_loss_node(g, b1.center, image_w, image_h), st_weight);
    if (!b2.in_bounds) {
        Value st2 = scale(g, st_loss_node(g, b2.center, image_w, image_h), st_weight);
        acc = acc.valid() ? add(g, acc, st2) : st2;
    }
    out.term = acc;
    return out;
}

}  // namespace locrank
