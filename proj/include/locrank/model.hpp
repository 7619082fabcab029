#pragma once

#include <map>
#include <string>
#include <utility>

#include "locrank/graph.hpp"
#include "locrank/rng.hpp"
#include "locrank/stn.hpp"
#include "locrank/tensor.hpp"

namespace locrank {

// Network sizing. input_size is the side of the (cropped) image the branch
// consumes; patch_size is the side of the sampled patch and of the
// downscaled global stream fed to the ranker.
struct ModelArch {
    int channels = 1;
    int input_size = 56;
    int patch_size = 32;
    bool use_global = false;

    double s_init = 0.5;
    double s_min = 0.05;
    double s_max = 2.0;
    double t_init_range = 0.3;
    double scale_lr_factor = 0.1;

    // Derived flatten widths; throw ConfigError when a stage underflows.
    int stn_fc_in() const;
    int rn_fc_in() const;
    int feat_dim() const { return use_global ? 128 : 64; }
    void validate() const;
};

// Named parameter tensors. Both Siamese branches and both ranker streams
// read the same map, which is what makes the weights shared.
struct ModelParams {
    ModelArch arch;
    std::map<std::string, Tensor> tensors;

    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;
    bool has(const std::string& path) const { return tensors.count(path) != 0; }
};

ModelParams init_params(const ModelArch& arch, Rng& rng);

struct BranchOutput {
    double v = 0.0;
    Theta theta;
    Tensor patch;
    double center_x = 0.0;
    double center_y = 0.0;
    bool in_bounds = true;
};

// Per-graph leaves for every parameter tensor.
struct ParamNodes {
    std::map<std::string, Value> leaves;
    Value at(const std::string& path) const;
};
ParamNodes bind_params(Graph& g, const ModelParams& params, bool needs_grad);

// Graph handles produced by one branch forward pass; the plain-value fields
// mirror BranchOutput for callers that never run backward.
struct BranchNodes {
    Value v;
    Value s, tx, ty;
    Value center;
    Value patch;
    Theta theta;
    double center_x = 0.0;
    double center_y = 0.0;
    bool in_bounds = true;
};

BranchNodes build_branch(Graph& g, Value image, const ModelParams& params, const ParamNodes& pn);

Theta localize(const Tensor& image, const ModelParams& params);
BranchOutput score_branch(const Tensor& image, const ModelParams& params, bool use_global);
std::pair<BranchOutput, BranchOutput> siamese_forward(const Tensor& image1, const Tensor& image2,
                                                      const ModelParams& params, bool use_global);

}  // namespace locrank
