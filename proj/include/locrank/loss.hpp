#pragma once

#include <vector>

#include "locrank/graph.hpp"
#include "locrank/model.hpp"
#include "locrank/stn.hpp"

namespace locrank {

// Per-pair loss breakdown. total applies the gate:
//   total = (1-l1)(1-l2)*rank + l1*st_weight*st1 + l2*st_weight*st2
// while rank_component and st_1/st_2 are the raw ungated values.
struct PairLossResult {
    double total = 0.0;
    double rank_component = 0.0;
    double st_1 = 0.0;
    double st_2 = 0.0;
    int lambda_1 = 0;
    int lambda_2 = 0;
    double prob = 0.5;  // P = sigmoid(v1 - v2)
};

// RankNet cross-entropy. L = 1 for ordered pairs (set Q), 0.5 for similar
// pairs (set E). Evaluated as log(1+e^(-d)) + (1-L)*d with d = v1-v2 to stay
// finite for large |d|.
double rank_loss(double v1, double v2, double L);
double rank_prob(double v1, double v2);

// Squared pixel distance of the warped patch center from the image center.
double st_loss(const Theta& theta, int image_w, int image_h);

PairLossResult pair_loss(double v1, double v2, double L, const Theta& t1, const Theta& t2,
                         int image_w, int image_h, double st_weight);

// Mean of per-pair gated totals over a batch (the reference evaluation the
// graph-built loss must agree with).
double combined_loss(const std::vector<PairLossResult>& batch);

// Graph-side builders.
Value rank_loss_node(Graph& g, Value v1, Value v2, double L);
// Builds from a [2] center node; C = ((W-1)/2, (H-1)/2).
Value st_loss_node(Graph& g, Value center, int image_w, int image_h);

// One pair's contribution to the batch loss. When a branch center is out of
// bounds, only its ST term is added and the rank term is never built, so no
// gradient reaches the ranker from this pair; ST terms themselves only
// depend on theta and cannot touch ranker weights.
struct PairTerm {
    Value term;
    PairLossResult result;
};
PairTerm pair_loss_node(Graph& g, const BranchNodes& b1, const BranchNodes& b2, double L,
                        int image_w, int image_h, double st_weight);

}  // namespace locrank
