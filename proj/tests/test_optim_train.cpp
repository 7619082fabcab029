#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "locrank/checkpoint.hpp"
#include "locrank/data.hpp"
#include "locrank/errors.hpp"
#include "locrank/loss.hpp"
#include "locrank/model.hpp"
#include "locrank/optim.hpp"
#include "locrank/stn.hpp"
#include "locrank/train.hpp"
#include "test_util.hpp"

using namespace locrank;
using testutil::smooth_image;

namespace {

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.image_size = 20;
    cfg.crop_size = 20;
    cfg.patch_size = 12;
    cfg.channels = 1;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.threads = 1;
    cfg.seed = 1;
    cfg.out_dir.clear();
    cfg.r_min = 2.0;
    cfg.r_max = 4.0;
    return cfg;
}

PairDataset two_image_dataset(double phase1, double phase2, double L) {
    PairDataset ds;
    ds.images.push_back(smooth_image(1, 20, 20, phase1));
    ds.images.push_back(smooth_image(1, 20, 20, phase2));
    ds.pairs.push_back({0, 1, L});
    return ds;
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("sgd hand-computed update sequence") {
    ModelParams p;
    p.tensors["w"] = Tensor::scalar(1.0);
    OptimState st;
    st.base_lr = 0.1;
    st.momentum = 0.9;
    GradMap grads;
    grads["w"] = Tensor::scalar(2.0);

    sgd_step(p, grads, st);
    CHECK(p.at("w").at(0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(st.velocity.at("w").at(0) == doctest::Approx(-0.2).epsilon(1e-15));

    sgd_step(p, grads, st);
    CHECK(st.velocity.at("w").at(0) == doctest::Approx(-0.38).epsilon(1e-15));
    CHECK(p.at("w").at(0) == doctest::Approx(0.42).epsilon(1e-15));
}

TEST_CASE("sgd no-ops on zero gradient and zero velocity") {
    ModelParams p;
    p.tensors["w"] = Tensor::from({2}, {1.5, -2.5});
    OptimState st;
    st.base_lr = 0.1;
    GradMap grads;
    grads["w"] = Tensor({2});
    sgd_step(p, grads, st);
    CHECK(p.at("w").at(0) == 1.5);
    CHECK(p.at("w").at(1) == -2.5);
}

TEST_CASE("sgd rejects mismatched gradient shapes") {
    ModelParams p;
    p.tensors["w"] = Tensor({2});
    OptimState st;
    GradMap grads;
    grads["w"] = Tensor({3});
    CHECK_THROWS_AS(sgd_step(p, grads, st), RuntimeFailure);
}

TEST_CASE("lr multiplier patterns: prefix and exact, first match wins") {
    OptimState st;
    st.lr_multipliers = {{"stn.*", 0.1}, {"final.bias", 0.5}};
    CHECK(st.multiplier_for("stn.conv1.weight") == 0.1);
    CHECK(st.multiplier_for("final.bias") == 0.5);
    CHECK(st.multiplier_for("rn.conv1.weight") == 1.0);
}

TEST_CASE("scale parameter sees one tenth of the translation learning rate") {
    RunConfig cfg = tiny_config();
    const Tensor img = smooth_image(1, 20, 20, 0.8);

    auto theta_head_grad = [&](double factor) {
        cfg.scale_lr_factor = factor;
        Rng rng(5);
        ModelParams p = init_params(arch_from_config(cfg), rng);
        p.at("stn.fc2.weight") = testutil::rand_tensor({3, 32}, rng, -0.1, 0.1);
        Graph g;
        ParamNodes pn = bind_params(g, p, true);
        BranchNodes b = build_branch(g, g.leaf(img, false), p, pn);
        g.backward(b.s);  // loss = s itself
        return std::make_pair(g.grad(pn.at("stn.fc2.weight")), p);
    };

    auto [g_full, p_full] = theta_head_grad(1.0);
    auto [g_tenth, p_tenth] = theta_head_grad(0.1);
    bool saw_nonzero = false;
    for (int j = 0; j < 32; ++j) {
        const double a = g_full.at(0, j);
        const double b = g_tenth.at(0, j);
        if (a != 0) saw_nonzero = true;
        CHECK(b == doctest::Approx(0.1 * a).epsilon(1e-12));
    }
    CHECK(saw_nonzero);

    // effective step on the s row: lr_stn * 0.1 = 1e-5 of the raw gradient
    GradMap grads;
    for (const auto& [name, t] : p_tenth.tensors) grads[name] = Tensor(t.shape);
    grads["stn.fc2.weight"] = g_tenth;
    OptimState st = make_optim_state(0.001, 0.0001, 0.0);
    const double before = p_tenth.at("stn.fc2.weight").at(0, 3);
    sgd_step(p_tenth, grads, st);
    const double after = p_tenth.at("stn.fc2.weight").at(0, 3);
    CHECK(after - before == doctest::Approx(-1e-5 * g_full.at(0, 3)).epsilon(1e-9));
}

TEST_CASE("zero learning rate leaves parameters bit-identical through train()") {
    RunConfig cfg = tiny_config();
    cfg.lr_rn = 0.0;
    cfg.lr_stn = 0.0;
    Rng rng(cfg.seed);
    const ModelParams before = init_params(arch_from_config(cfg), rng);
    const PairDataset ds = two_image_dataset(0.0, 1.5, 1.0);
    const TrainResult res = train(cfg, ds, before);
    for (const auto& [name, t] : before.tensors) {
        const Tensor& after = res.params.at(name);
        for (int i = 0; i < t.numel(); ++i) CHECK(after.at(i) == t.at(i));
    }
}

TEST_CASE("a single Q pair is learned: loss falls and the margin turns positive") {
    RunConfig cfg = tiny_config();
    cfg.epochs = 60;
    cfg.batch_size = 1;
    cfg.lr_rn = 0.002;
    cfg.lr_stn = 0.0002;
    const PairDataset ds = two_image_dataset(0.3, 2.1, 1.0);
    ModelParams params = init_for_stage(cfg);
    const TrainResult res = train(cfg, ds, std::move(params));

    auto avg5 = [&](size_t from) {
        double acc = 0;
        for (size_t i = from; i < from + 5; ++i) acc += res.log[i].mean_rank;
        return acc / 5;
    };
    CHECK(avg5(res.log.size() - 5) < avg5(0));
    // after warm-up the 5-epoch moving average keeps falling
    CHECK(avg5(res.log.size() - 5) <= avg5(20) + 1e-9);

    auto [b1, b2] = siamese_forward(ds.images[0], ds.images[1], res.params, false);
    CHECK(b1.v - b2.v > 0.0);
}

TEST_CASE("out-of-bounds pair: no ranker gradient, centers recover after one step") {
    RunConfig cfg = tiny_config();
    Rng rng(3);
    ModelParams params = init_params(arch_from_config(cfg), rng);
    // bias-driven theta: forces both centers out and makes the one-step
    // recovery dynamics clean
    params.at("stn.fc2.weight").fill(0.0);
    params.at("stn.fc2.bias").at(1) = 6.0;  // s=0.5 -> normalized center 3.0, far right

    const Tensor img = smooth_image(1, 20, 20, 0.4);
    PairDataset ds;
    ds.images.push_back(img);
    ds.pairs.push_back({0, 0, 1.0});

    const Theta before = localize(img, params);
    auto [bx, by] = patch_center_px(before, 20, 20);
    REQUIRE(!center_in_bounds(bx, by, 20, 20));
    const double dist_before = std::hypot(bx - 9.5, by - 9.5);

    BatchStats stats;
    GradMap grads = batch_gradient(ds, {0}, {{0, 0, 0, 0}}, params, cfg, 1, &stats);
    CHECK(stats.results[0].lambda_1 == 1);
    CHECK(stats.results[0].lambda_2 == 1);

    double ranker_abs = 0.0, head_abs = 0.0;
    for (const auto& [name, g] : grads) {
        double a = 0;
        for (double v : g.data) a += std::abs(v);
        if (name.rfind("rn.", 0) == 0 || name.rfind("final.", 0) == 0)
            ranker_abs += a;
        else
            head_abs += a;
    }
    CHECK(ranker_abs == 0.0);
    CHECK(head_abs > 0.0);

    OptimState st = make_optim_state(cfg.lr_rn, cfg.lr_stn, 0.0);
    sgd_step(params, grads, st);
    const Theta after = localize(img, params);
    auto [ax, ay] = patch_center_px(after, 20, 20);
    CHECK(std::hypot(ax - 9.5, ay - 9.5) < dist_before);
}

TEST_CASE("in-bounds pair contributes zero ST loss") {
    RunConfig cfg = tiny_config();
    ModelParams params = init_for_stage(cfg);
    params.at("stn.fc2.weight").fill(0.0);  // centers pinned at |s*t| <= 0.15: in bounds
    const PairDataset ds = two_image_dataset(0.2, 1.2, 1.0);
    BatchStats stats;
    (void)batch_gradient(ds, {0}, {{0, 0, 0, 0}}, params, cfg, 1, &stats);
    CHECK(stats.results[0].lambda_1 == 0);
    CHECK(stats.results[0].lambda_2 == 0);
    CHECK(stats.results[0].total == doctest::Approx(stats.results[0].rank_component));
}

TEST_CASE("batch gradients do not depend on the worker thread count") {
    RunConfig cfg = tiny_config();
    ModelParams params = init_for_stage(cfg);
    PairDataset ds;
    for (int i = 0; i < 6; ++i) ds.images.push_back(smooth_image(1, 20, 20, 0.37 * i));
    for (int i = 0; i < 5; ++i) ds.pairs.push_back({i, i + 1, i % 2 ? 0.5 : 1.0});

    const std::vector<int> idx{0, 1, 2, 3, 4};
    const std::vector<std::array<int, 4>> offs(5, {0, 0, 0, 0});
    const GradMap a = batch_gradient(ds, idx, offs, params, cfg, 1, nullptr);
    const GradMap b = batch_gradient(ds, idx, offs, params, cfg, 3, nullptr);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) {
        const Tensor& other = b.at(name);
        for (int i = 0; i < t.numel(); ++i) CHECK(t.at(i) == other.at(i));
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic naming the pair") {
    RunConfig cfg = tiny_config();
    ModelParams params = init_for_stage(cfg);
    params.at("final.bias").at(0) = std::nan("");
    const PairDataset ds = two_image_dataset(0.0, 1.0, 1.0);
    CHECK_THROWS_WITH_AS(
        (void)batch_gradient(ds, {0}, {{0, 0, 0, 0}}, params, cfg, 1, nullptr),
        doctest::Contains("pair 0"), RuntimeFailure);
}

TEST_CASE("checkpoint round-trip is bit-exact and corruption is rejected") {
    RunConfig cfg = tiny_config();
    ModelParams params = init_for_stage(cfg);
    OptimState optim = make_optim_state(cfg.lr_rn, cfg.lr_stn, cfg.momentum);
    Rng vel_rng(9);
    optim.velocity["rn.fc1.weight"] = testutil::rand_tensor({64, 16}, vel_rng);

    const std::string dir = std::filesystem::temp_directory_path() / "locrank_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/a.lrk";
    save_checkpoint(path, params, optim, cfg);
    const Checkpoint ck = load_checkpoint(path);

    REQUIRE(ck.params.tensors.size() == params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
        const Tensor& got = ck.params.at(name);
        REQUIRE(got.same_shape(t));
        for (int i = 0; i < t.numel(); ++i) CHECK(got.at(i) == t.at(i));
    }
    const Tensor& vel = ck.optim.velocity.at("rn.fc1.weight");
    for (int i = 0; i < vel.numel(); ++i)
        CHECK(vel.at(i) == optim.velocity.at("rn.fc1.weight").at(i));
    CHECK(ck.config.patch_size == cfg.patch_size);

    // corrupted magic
    std::string bytes = read_bytes(path);
    bytes[0] = 'X';
    const std::string bad = dir + "/bad.lrk";
    std::ofstream(bad, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("magic"), RuntimeFailure);

    // truncated payload
    const std::string trunc = dir + "/trunc.lrk";
    std::ofstream(trunc, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(trunc), RuntimeFailure);

    // tensors that disagree with the architecture in the embedded config
    RunConfig lied = cfg;
    lied.patch_size = 16;
    const std::string mism = dir + "/mismatch.lrk";
    save_checkpoint(mism, params, optim, lied);
    CHECK_THROWS_WITH_AS(load_checkpoint(mism), doctest::Contains("architecture"),
                         RuntimeFailure);
}

TEST_CASE("stage 2 adopts stage-1 tensors and reinitializes the scoring layer") {
    RunConfig cfg1 = tiny_config();
    cfg1.stage = 1;
    ModelParams p1 = init_for_stage(cfg1);
    p1.at("stn.conv1.weight").at(0) = 0.123456;  // marker
    OptimState optim = make_optim_state(cfg1.lr_rn, cfg1.lr_stn, cfg1.momentum);

    const std::string dir = std::filesystem::temp_directory_path() / "locrank_stage_test";
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/stage1.lrk";
    save_checkpoint(path, p1, optim, cfg1);

    RunConfig cfg2 = cfg1;
    cfg2.stage = 2;
    cfg2.checkpoint_in = path;
    const ModelParams p2 = init_for_stage(cfg2);

    CHECK(p2.at("final.weight").shape == std::vector<int>{1, 128});
    CHECK(p2.at("stn.conv1.weight").at(0) == 0.123456);
    for (const std::string name : {"stn.conv2.weight", "rn.conv1.weight", "rn.fc1.weight"}) {
        const Tensor& a = p1.at(name);
        const Tensor& b = p2.at(name);
        REQUIRE(a.same_shape(b));
        for (int i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
    }

    // stage 2 without a checkpoint is a config error
    RunConfig cfg3 = cfg1;
    cfg3.stage = 2;
    CHECK_THROWS_AS(init_for_stage(cfg3), ConfigError);
}

TEST_CASE("10-crop scoring: degenerate crop equals the two-view mean") {
    RunConfig cfg = tiny_config();  // crop == image
    const ModelParams params = init_for_stage(cfg);
    const Tensor img = smooth_image(1, 20, 20, 0.9);
    const double v = score_branch(img, params, false).v;
    const double vm = score_branch(mirror_image(img), params, false).v;
    CHECK(score_image_tta(img, params, cfg) == doctest::Approx((v + vm) / 2).epsilon(1e-12));

    cfg.tta_flips = false;
    CHECK(score_image_tta(img, params, cfg) == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("10-crop scoring: symmetric image scores like its mirror") {
    RunConfig cfg = tiny_config();
    cfg.image_size = 24;
    cfg.crop_size = 20;
    const ModelParams params = init_for_stage(cfg);
    Tensor img({1, 24, 24});
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            const double v = 0.5 + 0.3 * std::sin(0.4 * std::min(x, 23 - x)) * std::cos(0.3 * y);
            img.at(0, y, x) = v;
        }
    const Tensor mir = mirror_image(img);
    for (int i = 0; i < img.numel(); ++i) REQUIRE(img.at(i) == mir.at(i));
    const double tta = score_image_tta(img, params, cfg);
    cfg.tta_flips = false;
    // flips add nothing new on a symmetric image
    CHECK(tta == doctest::Approx(score_image_tta(img, params, cfg)).epsilon(1e-12));
}

TEST_CASE("10-crop scoring equals the hand-computed mean of the ten views") {
    RunConfig cfg = tiny_config();
    cfg.image_size = 24;
    cfg.crop_size = 20;
    const ModelParams params = init_for_stage(cfg);
    const Tensor img = smooth_image(1, 24, 24, 1.23);

    const int m = 4;
    const std::array<std::pair<int, int>, 5> origins{
        std::make_pair(0, 0), std::make_pair(m, 0), std::make_pair(0, m), std::make_pair(m, m),
        std::make_pair(m / 2, m / 2)};
    double acc = 0;
    for (auto [ox, oy] : origins) {
        const Tensor crop = crop_image(img, ox, oy, 20);
        acc += score_branch(crop, params, false).v;
        acc += score_branch(mirror_image(crop), params, false).v;
    }
    CHECK(score_image_tta(img, params, cfg) == doctest::Approx(acc / 10).epsilon(1e-12));
}

TEST_CASE("deterministic mode: same seed gives byte-identical logs and checkpoints") {
    SyntheticConfig sc;
    sc.image_w = 24;
    sc.image_h = 24;
    sc.r_min = 2;
    sc.r_max = 4;
    sc.clutter_level = 0.2;
    const auto samples = gen_synthetic(6, sc, 42);
    const auto pairs = make_pairs(samples, 8, 0.1, 43);
    const PairDataset ds = dataset_from_samples(samples, pairs);

    RunConfig cfg = tiny_config();
    cfg.image_size = 24;
    cfg.crop_size = 20;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.deterministic = true;
    cfg.threads = 2;

    const std::string base = std::filesystem::temp_directory_path() / "locrank_det";
    for (const char* sub : {"a", "b"}) {
        cfg.out_dir = base + "_" + sub;
        std::filesystem::remove_all(cfg.out_dir);
        ModelParams params = init_for_stage(cfg);
        (void)train(cfg, ds, std::move(params));
    }
    CHECK(read_bytes(base + "_a/train_log.tsv") == read_bytes(base + "_b/train_log.tsv"));
    CHECK(read_bytes(base + "_a/centers.tsv") == read_bytes(base + "_b/centers.tsv"));
    const std::string ck_a = read_bytes(base + "_a/checkpoint_final.lrk");
    std::string ck_b = read_bytes(base + "_b/checkpoint_final.lrk");
    // out_dir differs inside the config echo; normalize it before comparing
    size_t pos;
    std::string a_norm = ck_a;
    while ((pos = a_norm.find(base + "_a")) != std::string::npos)
        a_norm.replace(pos, (base + "_a").size(), base + "_x");
    while ((pos = ck_b.find(base + "_b")) != std::string::npos)
        ck_b.replace(pos, (base + "_b").size(), base + "_x");
    CHECK(a_norm == ck_b);
}

TEST_CASE("training writes logs, centers, periodic checkpoints and a config dump") {
    RunConfig cfg = tiny_config();
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    cfg.out_dir = std::filesystem::temp_directory_path() / "locrank_outputs";
    std::filesystem::remove_all(cfg.out_dir);
    const PairDataset ds = two_image_dataset(0.1, 0.9, 1.0);
    (void)train(cfg, ds, init_for_stage(cfg));

    CHECK(std::filesystem::exists(cfg.out_dir + "/train_log.tsv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/centers.tsv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/checkpoint_ep0002.lrk"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/checkpoint_final.lrk"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/effective_config.cfg"));

    // log format: 7 tab-separated columns per epoch
    std::ifstream log(cfg.out_dir + "/train_log.tsv");
    std::string line;
    int rows = 0;
    while (std::getline(log, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), '\t') == 6);
    }
    CHECK(rows == 4);
}
