#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "locrank/checkpoint.hpp"
#include "locrank/config.hpp"
#include "locrank/data.hpp"
#include "locrank/errors.hpp"
#include "locrank/eval.hpp"
#include "locrank/gradcheck.hpp"
#include "locrank/loss.hpp"
#include "locrank/netpbm.hpp"
#include "locrank/ops.hpp"
#include "locrank/rng.hpp"
#include "locrank/train.hpp"
#include "locrank/viz.hpp"

namespace {

using namespace locrank;

// Flag layer collected before the config file is parsed; applied afterwards
// so precedence is flag > file > default.
struct CliArgs {
    std::string config_path;
    std::vector<std::string> sets;
    bool deterministic = false;
    bool have_seed = false;
    std::uint64_t seed = 0;
    bool have_threads = false;
    int threads = 0;
    std::string out_dir;
    bool have_stage = false;
    int stage = 1;
    bool have_epochs = false;
    int epochs = 0;
};

RunConfig resolve_config(const CliArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
    if (const char* env = std::getenv("LOCRANK_THREADS"); env && !args.have_threads)
        apply_override(cfg, "threads", env);
    for (const std::string& kv : args.sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.deterministic) cfg.deterministic = true;
    if (args.have_seed) cfg.seed = args.seed;
    if (args.have_threads) cfg.threads = args.threads;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.have_stage) cfg.stage = args.stage;
    if (args.have_epochs) cfg.epochs = args.epochs;
    cfg.validate();
    return cfg;
}

void write_effective_config(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream f(cfg.out_dir + "/effective_config.cfg", std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write effective config under " + cfg.out_dir);
    f << dump_config(cfg);
}

int cmd_gen_data(const RunConfig& cfg) {
    write_effective_config(cfg);
    SyntheticConfig sc;
    sc.image_w = cfg.image_size;
    sc.image_h = cfg.image_size;
    sc.clutter_level = cfg.clutter_level;
    sc.r_min = cfg.r_min;
    sc.r_max = cfg.r_max;
    sc.mode = parse_position_mode(cfg.position_mode);

    const std::string img_dir = cfg.out_dir + "/images";
    std::filesystem::create_directories(img_dir);

    auto emit_split = [&](const std::string& name, int n_images, std::uint64_t seed)
        -> std::pair<std::vector<SyntheticSample>, std::vector<std::string>> {
        std::vector<SyntheticSample> samples = gen_synthetic(n_images, sc, seed);
        std::vector<std::string> rels;
        for (size_t i = 0; i < samples.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "images/%s_%04zu.pgm", name.c_str(), i);
            rels.emplace_back(buf);
            write_image(cfg.out_dir + "/" + buf, samples[i].image);
        }
        write_truth_sidecar(cfg.out_dir + "/truth_" + name + ".tsv", rels, samples);
        return {std::move(samples), std::move(rels)};
    };

    auto [train_samples, train_rels] = emit_split("train", cfg.n_images, cfg.seed);
    auto [test_samples, test_rels] = emit_split("test", cfg.n_test_images, cfg.seed + 1);

    auto pairs_to_records = [](const std::vector<ComparisonPair>& pairs,
                               const std::vector<std::string>& rels) {
        std::vector<ManifestRecord> recs;
        for (const ComparisonPair& p : pairs)
            recs.push_back({rels[static_cast<size_t>(p.first)],
                            rels[static_cast<size_t>(p.second)], p.L});
        return recs;
    };
    const auto train_pairs = make_pairs(train_samples, cfg.n_pairs, cfg.eps, cfg.seed + 2);
    const auto test_pairs = make_q_pairs(test_samples, cfg.n_test_pairs, cfg.eps, cfg.seed + 3);
    write_manifest(cfg.out_dir + "/train_pairs.tsv", pairs_to_records(train_pairs, train_rels));
    write_manifest(cfg.out_dir + "/test_pairs.tsv", pairs_to_records(test_pairs, test_rels));

    std::cout << "wrote " << cfg.n_images << "+" << cfg.n_test_images << " images, "
              << train_pairs.size() << " train pairs, " << test_pairs.size()
              << " test pairs under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.train_manifest.empty()) throw ConfigError("train: train_manifest is required");
    write_effective_config(cfg);
    const DatasetManifest manifest = load_manifest(cfg.train_manifest, cfg.data_root);
    const PairDataset data = load_pair_dataset(manifest);
    ModelParams params = init_for_stage(cfg);
    const TrainResult result = train(cfg, data, std::move(params));
    const EpochLog& last = result.log.back();
    std::cout << "trained " << cfg.epochs << " epochs; final mean loss " << last.mean_total
              << ", oob fraction " << last.oob_fraction << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint_in.empty()) throw ConfigError("eval: checkpoint_in is required");
    if (cfg.test_manifest.empty()) throw ConfigError("eval: test_manifest is required");
    write_effective_config(cfg);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint_in);
    RunConfig run = ck.config;  // model geometry comes from the checkpoint
    run.test_manifest = cfg.test_manifest;
    run.data_root = cfg.data_root;
    run.truth_sidecar = cfg.truth_sidecar;
    run.out_dir = cfg.out_dir;
    run.eq_tol_scale = cfg.eq_tol_scale;
    run.tta_flips = cfg.tta_flips;

    const DatasetManifest manifest = load_manifest(run.test_manifest, run.data_root);
    const PairDataset data = load_pair_dataset(manifest);
    EvalReport rep = eval_pairs(data, ck.params, run);

    if (!run.truth_sidecar.empty()) {
        const std::vector<TruthRecord> truth = load_truth_sidecar(run.truth_sidecar);
        std::map<std::string, const TruthRecord*> by_path;
        for (const TruthRecord& t : truth) by_path[t.path] = &t;
        std::vector<SyntheticSample> samples;
        for (size_t i = 0; i < data.paths.size(); ++i) {
            auto it = by_path.find(data.paths[i]);
            if (it == by_path.end()) continue;
            SyntheticSample s;
            s.image = data.images[i];
            s.strength = it->second->strength;
            s.center_x = it->second->center_x;
            s.center_y = it->second->center_y;
            s.radius = it->second->radius;
            samples.push_back(std::move(s));
        }
        if (!samples.empty()) rep.mean_center_error_px = localization_error(samples, ck.params, run);
    }

    const std::string text = format_report(rep);
    std::ofstream f(cfg.out_dir + "/eval_report.txt", std::ios::trunc);
    f << text;
    std::cout << text;
    return 0;
}

int cmd_visualize(const RunConfig& cfg) {
    if (cfg.checkpoint_in.empty()) throw ConfigError("visualize: checkpoint_in is required");
    write_effective_config(cfg);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint_in);
    RunConfig run = ck.config;
    run.out_dir = cfg.out_dir;
    run.strip_k = cfg.strip_k;
    run.heatmap_sigma = cfg.heatmap_sigma;

    if (!cfg.centers_log.empty()) {
        const CentersLog log = load_centers_log(cfg.centers_log);
        // At most 8 epochs, spaced evenly across the log.
        std::vector<int> picks;
        const int n = static_cast<int>(log.epochs.size());
        const int want = std::min(8, n);
        for (int i = 0; i < want; ++i)
            picks.push_back(want == 1 ? 0 : i * (n - 1) / (want - 1));
        std::vector<std::vector<std::pair<double, double>>> sel_centers;
        std::vector<int> sel_epochs;
        for (int p : picks) {
            sel_centers.push_back(log.centers[static_cast<size_t>(p)]);
            sel_epochs.push_back(log.epochs[static_cast<size_t>(p)]);
        }
        // Centers are logged in full-image coordinates; blend over a sample
        // image when one is available.
        Tensor background;
        const Tensor* bg = nullptr;
        if (!cfg.test_manifest.empty()) {
            const DatasetManifest m = load_manifest(cfg.test_manifest, cfg.data_root);
            if (!m.records.empty()) {
                const std::string& rel = m.records[0].path1;
                const bool absolute = !rel.empty() && rel[0] == '/';
                const Tensor full =
                    read_image(m.root.empty() || absolute ? rel : m.root + "/" + rel);
                if (full.dim(1) == run.image_size && full.dim(2) == run.image_size)
                    bg = &(background = full);
            }
        }
        emit_heatmaps(sel_centers, sel_epochs, run.image_size, run.image_size,
                      run.heatmap_sigma, cfg.out_dir + "/heatmap", bg);
        std::cout << "wrote " << sel_epochs.size() << " heatmaps\n";
    }
    if (!cfg.test_manifest.empty()) {
        const DatasetManifest manifest = load_manifest(cfg.test_manifest, cfg.data_root);
        const PairDataset data = load_pair_dataset(manifest);
        const int k = std::min(run.strip_k, static_cast<int>(data.images.size()));
        emit_ranked_strip(data.images, ck.params, run, k, cfg.out_dir + "/ranked_strip.ppm");
        std::cout << "wrote ranked strip of " << k << " images\n";
    }
    if (cfg.centers_log.empty() && cfg.test_manifest.empty())
        throw ConfigError("visualize: need centers_log and/or test_manifest");
    return 0;
}

// Finite-difference sweep over every differentiable operation; one row per
// op, max relative error over 3 seeded draws.
int cmd_gradcheck(const RunConfig& cfg) {
    const double step = 1e-5;
    const double tol = 1e-4;
    bool ok = true;
    std::printf("%-28s %14s  %s\n", "op", "max_rel_err", "status");

    auto row = [&](const std::string& name, double err) {
        const bool pass = err <= tol;
        ok = ok && pass;
        std::printf("%-28s %14.3e  %s\n", name.c_str(), err, pass ? "ok" : "FAIL");
    };

    Rng rng(cfg.seed);
    auto rand_tensor = [&rng](std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = rng.uniform(lo, hi);
        return t;
    };

    for (int rep = 0; rep < 3; ++rep) {
        const Tensor img = rand_tensor({2, 6, 6});
        const Tensor w = rand_tensor({3, 2, 3, 3});
        const Tensor b = rand_tensor({3});
        const Tensor probe_w = rand_tensor({3, 4, 4});

        double e = grad_check(w, [&](Graph& g, const Tensor& p) {
            Value x = g.leaf(img, false);
            Value weights = g.leaf(p, true);
            Value bias = g.leaf(b, false);
            return GradProbe{ops::sum(g, ops::conv2d(g, x, weights, bias, 1)), weights};
        }, step);
        row("conv2d/weights#" + std::to_string(rep), e);

        e = grad_check(img, [&](Graph& g, const Tensor& p) {
            Value x = g.leaf(p, true);
            Value weights = g.leaf(w, false);
            Value bias = g.leaf(b, false);
            return GradProbe{ops::sum(g, ops::conv2d(g, x, weights, bias, 1)), x};
        }, step);
        row("conv2d/input#" + std::to_string(rep), e);

        e = grad_check(probe_w, [&](Graph& g, const Tensor& p) {
            Value x = g.leaf(p, true);
            Value pooled = ops::maxpool2d(g, x, 2, 2);
            return GradProbe{ops::sum(g, ops::mul(g, pooled, pooled)), x};
        }, step);
        row("maxpool2d#" + std::to_string(rep), e);

        Tensor relu_in = rand_tensor({8});
        for (double& v : relu_in.data) v += (v >= 0 ? 0.2 : -0.2);  // keep off the kink
        e = grad_check(relu_in, [&](Graph& g, const Tensor& p) {
            Value x = g.leaf(p, true);
            Value y = ops::relu(g, x);
            return GradProbe{ops::sum(g, ops::mul(g, y, y)), x};
        }, step);
        row("relu#" + std::to_string(rep), e);

        const Tensor lx = rand_tensor({5});
        const Tensor lw = rand_tensor({4, 5});
        const Tensor lb = rand_tensor({4});
        e = grad_check(lw, [&](Graph& g, const Tensor& p) {
            Value x = g.leaf(lx, true);
            Value ww = g.leaf(p, true);
            Value bb = g.leaf(lb, false);
            Value y = ops::linear(g, x, ww, bb);
            return GradProbe{ops::sum(g, ops::mul(g, y, y)), ww};
        }, step);
        row("linear#" + std::to_string(rep), e);

        const Tensor ca = rand_tensor({3});
        const Tensor cb = rand_tensor({4});
        e = grad_check(ca, [&](Graph& g, const Tensor& p) {
            Value a = g.leaf(p, true);
            Value bv = g.leaf(cb, true);
            Value y = ops::concat(g, a, bv);
            return GradProbe{ops::sum(g, ops::mul(g, y, y)), a};
        }, step);
        row("concat#" + std::to_string(rep), e);

        // Bilinear sampling through theta: smooth image, coords pushed off
        // integer pixels.
        Tensor smooth({1, 9, 9});
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x)
                smooth.at(0, y, x) = 0.5 + 0.3 * std::sin(0.7 * x + 0.3) * std::cos(0.5 * y - 0.2);
        Tensor theta({3});
        theta.at(0) = 0.43 + 0.1 * rng.uniform();
        theta.at(1) = 0.11 + 0.05 * rng.uniform();
        theta.at(2) = -0.13 + 0.05 * rng.uniform();
        e = grad_check(theta, [&](Graph& g, const Tensor& p) {
            Value th = g.leaf(p, true);
            Value s = ops::pick(g, th, 0);
            Value tx = ops::pick(g, th, 1);
            Value ty = ops::pick(g, th, 2);
            GridNode grid = generate_grid_node(g, s, tx, ty, 5, 9, 9);
            Value img_leaf = g.leaf(smooth, false);
            Value patch = bilinear_sample_node(g, img_leaf, grid);
            return GradProbe{ops::sum(g, ops::mul(g, patch, patch)), th};
        }, step);
        row("bilinear_sample/theta#" + std::to_string(rep), e);

        Tensor vs = rand_tensor({2}, -2.0, 2.0);
        e = grad_check(vs, [&](Graph& g, const Tensor& p) {
            Value v = g.leaf(p, true);
            Value l = rank_loss_node(g, ops::pick(g, v, 0), ops::pick(g, v, 1), rep % 2 ? 1.0 : 0.5);
            return GradProbe{l, v};
        }, step);
        row("rank_loss#" + std::to_string(rep), e);

        e = grad_check(theta, [&](Graph& g, const Tensor& p) {
            Value th = g.leaf(p, true);
            Value s = ops::pick(g, th, 0);
            Value tx = ops::pick(g, th, 1);
            Value ty = ops::pick(g, th, 2);
            Value center = patch_center_node(g, s, tx, ty, 33, 33);
            return GradProbe{st_loss_node(g, center, 33, 33), th};
        }, step);
        row("st_loss#" + std::to_string(rep), e);
    }

    std::printf("%s\n", ok ? "gradcheck: all ops within 1e-4" : "gradcheck: FAILURES above");
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"locrank: weakly-supervised localize-and-rank for relative attributes"};
    app.require_subcommand(1);

    CliArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "config file (key=value lines)");
        sub->add_option("--set", args.sets, "override a config key (key=value, repeatable)");
        sub->add_flag("--deterministic", args.deterministic,
                      "serial reduction and zeroed wall-clock fields in logs");
        sub->add_option("--seed", args.seed, "RNG seed")->each([&](const std::string&) {
            args.have_seed = true;
        });
        sub->add_option("--threads", args.threads, "worker thread cap (0 = all cores)")
            ->each([&](const std::string&) { args.have_threads = true; });
        sub->add_option("--out-dir", args.out_dir, "output directory");
        sub->add_option("--stage", args.stage, "training stage (1 or 2)")
            ->each([&](const std::string&) { args.have_stage = true; });
        sub->add_option("--epochs", args.epochs, "epoch count")
            ->each([&](const std::string&) { args.have_epochs = true; });
        return sub;
    };

    CLI::App* gen = add_common(app.add_subcommand("gen-data", "generate the synthetic benchmark"));
    CLI::App* tr = add_common(app.add_subcommand("train", "train a model"));
    CLI::App* ev = add_common(app.add_subcommand("eval", "evaluate a checkpoint"));
    CLI::App* vis = add_common(app.add_subcommand("visualize", "emit heatmaps and ranked strips"));
    CLI::App* gc = add_common(app.add_subcommand("gradcheck", "finite-difference gradient suite"));

    try {
        app.parse(argc, argv);
        const RunConfig cfg = resolve_config(args);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (tr->parsed()) return cmd_train(cfg);
        if (ev->parsed()) return cmd_eval(cfg);
        if (vis->parsed()) return cmd_visualize(cfg);
        if (gc->parsed()) return cmd_gradcheck(cfg);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
