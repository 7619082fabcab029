#pragma once

#include <string>
#include <utility>
#include <vector>

#include "locrank/config.hpp"
#include "locrank/model.hpp"
#include "locrank/tensor.hpp"

namespace locrank {

// 2-D histogram of patch centers, Gaussian-smoothed, through a fixed "hot"
// ramp (black -> red -> yellow -> white), optionally alpha-blended over a
// background image. Returns the [3,H,W] heat image.
Tensor render_heatmap(const std::vector<std::pair<double, double>>& centers, int image_w,
                      int image_h, double sigma, const Tensor* background = nullptr);

// One PPM per selected epoch from a per-epoch centers log.
void emit_heatmaps(const std::vector<std::vector<std::pair<double, double>>>& centers_by_epoch,
                   const std::vector<int>& epoch_numbers, int image_w, int image_h, double sigma,
                   const std::string& out_prefix, const Tensor* background = nullptr);

// Scores all images, sorts by predicted strength, uniformly samples k, and
// concatenates them left-to-right (ascending) with the STN patch extent
// drawn as a 1-pixel red box. Returns the [3,H,k*W] strip.
Tensor render_ranked_strip(const std::vector<Tensor>& images, const ModelParams& params,
                           const RunConfig& cfg, int k);

void emit_ranked_strip(const std::vector<Tensor>& images, const ModelParams& params,
                       const RunConfig& cfg, int k, const std::string& out_path);

// centers.tsv reader (epoch<TAB>x<TAB>y), grouped by epoch in file order.
struct CentersLog {
    std::vector<int> epochs;
    std::vector<std::vector<std::pair<double, double>>> centers;
};
CentersLog load_centers_log(const std::string& path);

}  // namespace locrank
