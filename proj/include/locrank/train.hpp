#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "locrank/config.hpp"
#include "locrank/data.hpp"
#include "locrank/loss.hpp"
#include "locrank/model.hpp"
#include "locrank/optim.hpp"

namespace locrank {

struct EpochLog {
    int epoch = 0;
    double mean_total = 0.0;
    double mean_rank = 0.0;  // gated rank contribution
    double mean_st = 0.0;    // gated, weighted ST contribution
    double oob_fraction = 0.0;
    double mean_s = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    OptimState optim;
    std::vector<EpochLog> log;
    // One entry per epoch: patch centers of every branch evaluation in
    // full-image pixel coordinates (crop offset added back), in pair order.
    // Feeds the heatmaps and the convergence diagnostics.
    std::vector<std::vector<std::pair<double, double>>> centers;
};

ModelArch arch_from_config(const RunConfig& cfg);

// Gradient of the batch-mean gated loss, reduced over pairs in index order
// regardless of thread count, plus the per-pair stats. Offsets are the
// pre-drawn crop origins (one (x,y) per image of each pair).
struct BatchStats {
    std::vector<PairLossResult> results;
    std::vector<std::pair<double, double>> centers;  // 2 per pair
    double sum_s = 0.0;
    int oob = 0;
};
GradMap batch_gradient(const PairDataset& data, const std::vector<int>& pair_indices,
                       const std::vector<std::array<int, 4>>& crop_offsets,
                       const ModelParams& params, const RunConfig& cfg, int threads,
                       BatchStats* stats);

// Two-stage-aware training over shuffled mini-batches with random crops.
// Writes per-epoch log lines, the centers log, and periodic checkpoints
// under cfg.out_dir when out_dir is non-empty.
TrainResult train(const RunConfig& cfg, const PairDataset& data, ModelParams params);

// Builds initial parameters for the configured stage; for stage 2 with
// checkpoint_in set, adopts every shape-matching tensor from the stage-1
// checkpoint (the scoring layer is freshly initialized).
ModelParams init_for_stage(const RunConfig& cfg);

// Mean score over the 4 corner + center crops and (optionally) their
// horizontal mirrors.
double score_image_tta(const Tensor& image, const ModelParams& params, const RunConfig& cfg);

Tensor crop_image(const Tensor& image, int ox, int oy, int size);
Tensor mirror_image(const Tensor& image);

std::string format_epoch_log(const EpochLog& log);

}  // namespace locrank
