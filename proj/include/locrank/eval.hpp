#pragma once

#include <string>
#include <vector>

#include "locrank/config.hpp"
#include "locrank/data.hpp"
#include "locrank/model.hpp"

namespace locrank {

struct EvalReport {
    int n_pairs_q = 0;
    int n_pairs_e = 0;
    double accuracy_q = 0.0;
    double accuracy_e = 0.0;    // fraction of E pairs with |v1-v2| <= eq_tol
    double eq_tol = 0.0;        // eq_tol_scale * stddev of test scores
    double mean_center_error_px = -1.0;  // < 0 when no ground truth given
    double oob_fraction = 0.0;
    double seconds_per_image = 0.0;
};

// Pairwise ranking accuracy with 10-crop score averaging. A Q pair counts
// correct iff score(first) > score(second); an exact tie is incorrect.
// E pairs are reported separately and never enter accuracy_q.
EvalReport eval_pairs(const PairDataset& data, const ModelParams& params, const RunConfig& cfg);

// Per-image TTA scores, indexed like data.images (exposed for recounts and
// the ranked-strip ordering).
std::vector<double> score_dataset(const PairDataset& data, const ModelParams& params,
                                  const RunConfig& cfg, double* seconds_per_image = nullptr);

// Mean Euclidean distance between the predicted patch center (center crop,
// mapped back to full-image pixels) and the generative blob center.
double localization_error(const std::vector<SyntheticSample>& samples, const ModelParams& params,
                          const RunConfig& cfg);

// Center-crop localization for one full-size image: patch center in
// full-image pixel coordinates plus the in-bounds flag of the crop frame.
struct LocalizedCenter {
    double x, y;
    bool in_bounds;
};
LocalizedCenter localize_center(const Tensor& image, const ModelParams& params,
                                const RunConfig& cfg);

std::string format_report(const EvalReport& r);

}  // namespace locrank
