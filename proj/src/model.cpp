#include "locrank/model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "locrank/errors.hpp"
#include "locrank/ops.hpp"

namespace locrank {

namespace {

int conv_out(int n, int k, int stride) { return (n - k) / stride + 1; }

int check_stage(int n, const char* where) {
    if (n < 1)
        throw ConfigError(std::string("architecture underflow at ") + where +
                          ": intermediate size " + std::to_string(n));
    return n;
}

// conv 3x3 -> relu -> pool2 -> conv 3x3 -> relu -> pool2 applied to side n.
int backbone_out(int n, const char* where) {
    n = check_stage(conv_out(n, 3, 1), where);
    n = check_stage(conv_out(n, 2, 2), where);
    n = check_stage(conv_out(n, 3, 1), where);
    n = check_stage(conv_out(n, 2, 2), where);
    return n;
}

}  // namespace

int ModelArch::stn_fc_in() const {
    const int side = backbone_out(input_size, "localizer");
    return 16 * side * side;
}

int ModelArch::rn_fc_in() const {
    const int side = backbone_out(patch_size, "ranker");
    return 16 * side * side;
}

void ModelArch::validate() const {
    if (channels < 1) throw ConfigError("model: channels must be >= 1");
    if (input_size < 2 || patch_size < 2) throw ConfigError("model: sizes must be >= 2");
    if (!(s_min > 0) || !(s_max > s_min)) throw ConfigError("model: need 0 < s_min < s_max");
    if (!(s_init >= s_min && s_init <= s_max))
        throw ConfigError("model: s_init outside [s_min, s_max]");
    (void)stn_fc_in();
    (void)rn_fc_in();
}

Tensor& ModelParams::at(const std::string& path) {
    auto it = tensors.find(path);
    if (it == tensors.end()) throw UsageError("unknown parameter " + path);
    return it->second;
}

const Tensor& ModelParams::at(const std::string& path) const {
    auto it = tensors.find(path);
    if (it == tensors.end()) throw UsageError("unknown parameter " + path);
    return it->second;
}

namespace {

Tensor he_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / fan_in);
    for (double& v : t.data) v = rng.normal(0.0, stddev);
    return t;
}

}  // namespace

ModelParams init_params(const ModelArch& arch, Rng& rng) {
    arch.validate();
    ModelParams p;
    p.arch = arch;
    const int c = arch.channels;

    // Insertion order below is the draw order; keep it fixed so a seed
    // always produces the same weights.
    p.tensors["stn.conv1.weight"] = he_init({8, c, 3, 3}, c * 9, rng);
    p.tensors["stn.conv1.bias"] = Tensor({8});
    p.tensors["stn.conv2.weight"] = he_init({16, 8, 3, 3}, 8 * 9, rng);
    p.tensors["stn.conv2.bias"] = Tensor({16});
    p.tensors["stn.conv3.weight"] = he_init({16, 16, 1, 1}, 16, rng);
    p.tensors["stn.conv3.bias"] = Tensor({16});
    {
        Tensor t = he_init({32, arch.stn_fc_in()}, arch.stn_fc_in(), rng);
        for (double& v : t.data) v *= 5.0;
        p.tensors["stn.fc1.weight"] = std::move(t);
    }
    p.tensors["stn.fc1.bias"] = Tensor({32});
    // Scale starts pinned at s_init (zero weights on the s row); the
    // translation rows get random weights sized so initial patch centers
    // scatter widely across the image (the localizer searches from there,
    // with the boundary loss reining in runaway patches), plus a random
    // bias shifting the whole cluster.
    Tensor theta_w({3, 32});
    for (int j = 0; j < 32; ++j) {
        theta_w.at(1, j) = rng.normal(0.0, 0.3);
        theta_w.at(2, j) = rng.normal(0.0, 0.3);
    }
    p.tensors["stn.fc2.weight"] = theta_w;
    Tensor theta_bias({3});
    theta_bias.at(0) = ops::softplus_inv(arch.s_init);
    theta_bias.at(1) = rng.uniform(-arch.t_init_range, arch.t_init_range);
    theta_bias.at(2) = rng.uniform(-arch.t_init_range, arch.t_init_range);
    p.tensors["stn.fc2.bias"] = theta_bias;

    p.tensors["rn.conv1.weight"] = he_init({8, c, 3, 3}, c * 9, rng);
    p.tensors["rn.conv1.bias"] = Tensor({8});
    p.tensors["rn.conv2.weight"] = he_init({16, 8, 3, 3}, 8 * 9, rng);
    p.tensors["rn.conv2.bias"] = Tensor({16});
    p.tensors["rn.fc1.weight"] = he_init({64, arch.rn_fc_in()}, arch.rn_fc_in(), rng);
    p.tensors["rn.fc1.bias"] = Tensor({64});

    p.tensors["final.weight"] = he_init({1, arch.feat_dim()}, arch.feat_dim(), rng);
    p.tensors["final.bias"] = Tensor({1});
    return p;
}

Value ParamNodes::at(const std::string& path) const {
    auto it = leaves.find(path);
    if (it == leaves.end()) throw UsageError("unknown parameter " + path);
    return it->second;
}

ParamNodes bind_params(Graph& g, const ModelParams& params, bool needs_grad) {
    ParamNodes pn;
    for (const auto& [name, t] : params.tensors) pn.leaves[name] = g.leaf(t, needs_grad);
    return pn;
}

namespace {

// Shared conv backbone: conv3x3 -> relu -> pool2 -> conv3x3 -> relu -> pool2.
Value backbone(Graph& g, Value x, const ParamNodes& pn, const std::string& prefix) {
    using namespace ops;
    Value h = relu(g, conv2d(g, x, pn.at(prefix + ".conv1.weight"), pn.at(prefix + ".conv1.bias"),
                             1));
    h = maxpool2d(g, h, 2, 2);
    h = relu(g, conv2d(g, h, pn.at(prefix + ".conv2.weight"), pn.at(prefix + ".conv2.bias"), 1));
    return maxpool2d(g, h, 2, 2);
}

Value ranker_feature(Graph& g, Value image_stream, const ParamNodes& pn) {
    using namespace ops;
    Value h = backbone(g, image_stream, pn, "rn");
    h = flatten(g, h);
    return relu(g, linear(g, h, pn.at("rn.fc1.weight"), pn.at("rn.fc1.bias")));
}

}  // namespace

BranchNodes build_branch(Graph& g, Value image, const ModelParams& params, const ParamNodes& pn) {
    using namespace ops;
    const ModelArch& arch = params.arch;
    const Tensor& img = g.val(image);
    if (img.rank() != 3 || img.dim(0) != arch.channels || img.dim(1) != arch.input_size ||
        img.dim(2) != arch.input_size)
        throw ConfigError("branch input " + img.shape_str() + " does not match configured [" +
                          std::to_string(arch.channels) + "," + std::to_string(arch.input_size) +
                          "," + std::to_string(arch.input_size) + "]");
    const int side = arch.input_size;

    // Localizer: backbone -> 1x1 reduction conv -> two fully-connected layers.
    Value h = backbone(g, image, pn, "stn");
    h = relu(g, conv2d(g, h, pn.at("stn.conv3.weight"), pn.at("stn.conv3.bias"), 1));
    h = flatten(g, h);
    h = relu(g, linear(g, h, pn.at("stn.fc1.weight"), pn.at("stn.fc1.bias")));
    Value theta_raw = linear(g, h, pn.at("stn.fc2.weight"), pn.at("stn.fc2.bias"));

    Value s = clamp(g, softplus(g, pick(g, theta_raw, 0)), arch.s_min, arch.s_max);
    s = scale_grad(g, s, arch.scale_lr_factor);
    Value tx = pick(g, theta_raw, 1);
    Value ty = pick(g, theta_raw, 2);

    GridNode grid = generate_grid_node(g, s, tx, ty, arch.patch_size, side, side);
    Value patch = bilinear_sample_node(g, image, grid);
    Value feat = ranker_feature(g, patch, pn);

    if (arch.use_global) {
        // Global stream: the full image resampled to patch resolution with a
        // fixed identity warp, through the same ranker weights.
        SamplingGrid ident = generate_grid(Theta{1.0, 0.0, 0.0}, arch.patch_size, side, side);
        GridNode gnode{g.leaf(ident.coords, false), arch.patch_size, side, side};
        Value global_stream = bilinear_sample_node(g, image, gnode);
        feat = concat(g, feat, ranker_feature(g, global_stream, pn));
    }

    const Tensor& fw = g.val(pn.at("final.weight"));
    if (fw.dim(1) != g.val(feat).numel())
        throw ConfigError("final layer expects " + std::to_string(fw.dim(1)) +
                          " inputs, feature is " + std::to_string(g.val(feat).numel()) +
                          " (stage/use_global mismatch)");
    Value v = linear(g, feat, pn.at("final.weight"), pn.at("final.bias"));

    BranchNodes out;
    out.v = v;
    out.s = s;
    out.tx = tx;
    out.ty = ty;
    out.patch = patch;
    out.center = patch_center_node(g, s, tx, ty, side, side);
    out.theta = Theta{g.val(s).at(0), g.val(tx).at(0), g.val(ty).at(0)};
    out.center_x = g.val(out.center).at(0);
    out.center_y = g.val(out.center).at(1);
    out.in_bounds = center_in_bounds(out.center_x, out.center_y, side, side);
    return out;
}

Theta localize(const Tensor& image, const ModelParams& params) {
    Graph g;
    ParamNodes pn = bind_params(g, params, false);
    Value img = g.leaf(image, false);
    BranchNodes b = build_branch(g, img, params, pn);
    return b.theta;
}

BranchOutput score_branch(const Tensor& image, const ModelParams& params, bool use_global) {
    if (use_global != params.arch.use_global)
        throw ConfigError("score_branch: use_global=" + std::to_string(use_global) +
                          " does not match the parameters' architecture");
    Graph g;
    ParamNodes pn = bind_params(g, params, false);
    Value img = g.leaf(image, false);
    BranchNodes b = build_branch(g, img, params, pn);
    BranchOutput out;
    out.v = g.val(b.v).at(0);
    out.theta = b.theta;
    out.patch = g.val(b.patch);
    out.center_x = b.center_x;
    out.center_y = b.center_y;
    out.in_bounds = b.in_bounds;
    return out;
}

std::pair<BranchOutput, BranchOutput> siamese_forward(const Tensor& image1, const Tensor& image2,
                                                      const ModelParams& params, bool use_global) {
    return {score_branch(image1, params, use_global), score_branch(image2, params, use_global)};
}

}  // namespace locrank
