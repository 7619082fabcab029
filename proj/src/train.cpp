#include "locrank/train.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "locrank/checkpoint.hpp"
#include "locrank/errors.hpp"
#include "locrank/rng.hpp"

namespace locrank {

ModelArch arch_from_config(const RunConfig& cfg) {
    ModelArch arch;
    arch.channels = cfg.channels;
    arch.input_size = cfg.crop_size;
    arch.patch_size = cfg.patch_size;
    arch.use_global = cfg.stage == 2;
    arch.s_init = cfg.s_init;
    arch.s_min = cfg.s_min;
    arch.s_max = cfg.s_max;
    arch.t_init_range = cfg.t_init_range;
    arch.scale_lr_factor = cfg.scale_lr_factor;
    return arch;
}

Tensor crop_image(const Tensor& image, int ox, int oy, int size) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (ox < 0 || oy < 0 || ox + size > w || oy + size > h)
        throw UsageError("crop outside image bounds");
    Tensor out({c, size, size});
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(ic, y, x) = image.at(ic, oy + y, ox + x);
    return out;
}

Tensor mirror_image(const Tensor& image) {
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out(image.shape);
    for (int ic = 0; ic < c; ++ic)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ic, y, x) = image.at(ic, y, w - 1 - x);
    return out;
}

namespace {

int effective_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct PairGrad {
    GradMap grads;
    PairLossResult result;
    std::array<std::pair<double, double>, 2> centers;
    std::array<double, 2> s_values;
};

// Forward + backward for one pair on its own graph. Gradients are seeded
// with 1/N so the reduced sum is the batch-mean gradient.
PairGrad pair_gradient(const Tensor& img1, const Tensor& img2, double L,
                       const ModelParams& params, const RunConfig& cfg, int batch_n) {
    Graph g;
    ParamNodes pn = bind_params(g, params, true);
    Value i1 = g.leaf(img1, false);
    Value i2 = g.leaf(img2, false);
    BranchNodes b1 = build_branch(g, i1, params, pn);
    BranchNodes b2 = build_branch(g, i2, params, pn);
    PairTerm term =
        pair_loss_node(g, b1, b2, L, cfg.crop_size, cfg.crop_size, cfg.st_loss_weight);
    if (!std::isfinite(term.result.total))
        throw RuntimeFailure(
            "non-finite pair loss (rank=" + std::to_string(term.result.rank_component) +
            ", st1=" + std::to_string(term.result.st_1) +
            ", st2=" + std::to_string(term.result.st_2) + ")");
    g.backward(term.term, 1.0 / batch_n);

    PairGrad out;
    out.result = term.result;
    out.centers = {std::make_pair(b1.center_x, b1.center_y),
                   std::make_pair(b2.center_x, b2.center_y)};
    out.s_values = {b1.theta.s, b2.theta.s};
    for (const auto& [name, leaf] : pn.leaves) out.grads[name] = g.grad(leaf);
    return out;
}

void accumulate(GradMap& into, const GradMap& delta) {
    for (const auto& [name, g] : delta) {
        auto it = into.find(name);
        if (it == into.end()) {
            into[name] = g;
        } else {
            Tensor& t = it->second;
            for (int i = 0; i < t.numel(); ++i) t.at(i) += g.at(i);
        }
    }
}

}  // namespace

GradMap batch_gradient(const PairDataset& data, const std::vector<int>& pair_indices,
                       const std::vector<std::array<int, 4>>& crop_offsets,
                       const ModelParams& params, const RunConfig& cfg, int threads,
                       BatchStats* stats) {
    const int n = static_cast<int>(pair_indices.size());
    if (n == 0) throw UsageError("batch_gradient: empty batch");
    std::vector<PairGrad> partial(static_cast<size_t>(n));
    std::vector<std::string> errors(static_cast<size_t>(n));

    auto run_range = [&](int lo, int hi) {
        for (int k = lo; k < hi; ++k) {
            const ComparisonPair& pr = data.pairs[static_cast<size_t>(pair_indices[k])];
            const auto& off = crop_offsets[static_cast<size_t>(k)];
            try {
                Tensor c1 = crop_image(data.images[static_cast<size_t>(pr.first)], off[0], off[1],
                                       cfg.crop_size);
                Tensor c2 = crop_image(data.images[static_cast<size_t>(pr.second)], off[2], off[3],
                                       cfg.crop_size);
                PairGrad pg = pair_gradient(c1, c2, pr.L, params, cfg, n);
                // log patch centers in full-image coordinates
                pg.centers[0].first += off[0];
                pg.centers[0].second += off[1];
                pg.centers[1].first += off[2];
                pg.centers[1].second += off[3];
                partial[static_cast<size_t>(k)] = std::move(pg);
            } catch (const std::exception& e) {
                errors[static_cast<size_t>(k)] =
                    std::string(e.what()) + " (pair " + std::to_string(pair_indices[k]) + ": " +
                    std::to_string(pr.first) + " vs " + std::to_string(pr.second) + ")";
            }
        }
    };

    const int workers = std::min(effective_threads(threads), n);
    if (workers <= 1) {
        run_range(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(n, lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (std::thread& t : pool) t.join();
    }
    for (const std::string& err : errors)
        if (!err.empty()) throw RuntimeFailure(err);

    // Fixed pair-order reduction: the result does not depend on the number
    // of worker threads.
    GradMap total;
    for (int k = 0; k < n; ++k) {
        accumulate(total, partial[static_cast<size_t>(k)].grads);
        if (stats) {
            stats->results.push_back(partial[static_cast<size_t>(k)].result);
            stats->centers.push_back(partial[static_cast<size_t>(k)].centers[0]);
            stats->centers.push_back(partial[static_cast<size_t>(k)].centers[1]);
            stats->sum_s += partial[static_cast<size_t>(k)].s_values[0] +
                            partial[static_cast<size_t>(k)].s_values[1];
            stats->oob += partial[static_cast<size_t>(k)].result.lambda_1 +
                          partial[static_cast<size_t>(k)].result.lambda_2;
        }
    }
    return total;
}

std::string format_epoch_log(const EpochLog& log) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f", log.epoch,
                  log.mean_total, log.mean_rank, log.mean_st, log.oob_fraction, log.mean_s,
                  log.wall_seconds);
    return buf;
}

ModelParams init_for_stage(const RunConfig& cfg) {
    Rng rng(cfg.seed);
    ModelParams params = init_params(arch_from_config(cfg), rng);
    if (cfg.stage == 2) {
        if (cfg.checkpoint_in.empty())
            throw ConfigError("stage 2 requires checkpoint_in pointing at a stage-1 checkpoint");
        const Checkpoint prev = load_checkpoint(cfg.checkpoint_in);
        adopt_matching(params, prev.params);
    }
    return params;
}

TrainResult train(const RunConfig& cfg, const PairDataset& data, ModelParams params) {
    cfg.validate();
    params.arch.validate();
    if (data.pairs.empty()) throw ConfigError("train: empty dataset");
    for (const ComparisonPair& p : data.pairs)
        if (p.first < 0 || p.second < 0 || p.first >= static_cast<int>(data.images.size()) ||
            p.second >= static_cast<int>(data.images.size()))
            throw ConfigError("train: pair references image out of range");

    // Dry-run shape audit before touching the optimizer.
    {
        Tensor probe({cfg.channels, cfg.crop_size, cfg.crop_size});
        (void)score_branch(probe, params, params.arch.use_global);
    }

    const bool writing = !cfg.out_dir.empty();
    std::ofstream log_file, centers_file;
    if (writing) {
        std::filesystem::create_directories(cfg.out_dir);
        log_file.open(cfg.out_dir + "/train_log.tsv", std::ios::trunc);
        centers_file.open(cfg.out_dir + "/centers.tsv", std::ios::trunc);
        if (!log_file || !centers_file)
            throw RuntimeFailure("cannot write logs under " + cfg.out_dir);
        std::ofstream eff(cfg.out_dir + "/effective_config.cfg", std::ios::trunc);
        eff << dump_config(cfg);
    }

    OptimState optim = make_optim_state(cfg.lr_rn, cfg.lr_stn, cfg.momentum);
    TrainResult result;
    Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    const int n_pairs = static_cast<int>(data.pairs.size());
    const int max_off = cfg.image_size - cfg.crop_size;
    std::vector<int> order(static_cast<size_t>(n_pairs));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates with the run RNG; crop offsets come from the same
        // stream, all drawn on the main thread.
        for (int i = n_pairs - 1; i > 0; --i) {
            const int j = order_rng.uniform_int(i + 1);
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        EpochLog ep;
        ep.epoch = epoch;
        std::vector<std::pair<double, double>> epoch_centers;
        int n_done = 0;

        for (int start = 0; start < n_pairs; start += cfg.batch_size) {
            const int end = std::min(n_pairs, start + cfg.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            std::vector<std::array<int, 4>> offsets;
            offsets.reserve(batch.size());
            for (size_t k = 0; k < batch.size(); ++k) {
                std::array<int, 4> off{0, 0, 0, 0};
                if (max_off > 0) {
                    off = {order_rng.uniform_int(max_off + 1), order_rng.uniform_int(max_off + 1),
                           order_rng.uniform_int(max_off + 1), order_rng.uniform_int(max_off + 1)};
                }
                offsets.push_back(off);
            }

            BatchStats stats;
            GradMap grads = batch_gradient(data, batch, offsets, params, cfg, cfg.threads, &stats);
            sgd_step(params, grads, optim);

            for (const PairLossResult& r : stats.results) {
                ep.mean_total += r.total;
                ep.mean_rank += (1 - r.lambda_1) * (1 - r.lambda_2) * r.rank_component;
                ep.mean_st += cfg.st_loss_weight * (r.lambda_1 * r.st_1 + r.lambda_2 * r.st_2);
            }
            ep.oob_fraction += stats.oob;
            ep.mean_s += stats.sum_s;
            n_done += static_cast<int>(batch.size());
            epoch_centers.insert(epoch_centers.end(), stats.centers.begin(),
                                 stats.centers.end());
        }

        ep.mean_total /= n_done;
        ep.mean_rank /= n_done;
        ep.mean_st /= n_done;
        ep.oob_fraction /= 2.0 * n_done;
        ep.mean_s /= 2.0 * n_done;
        const auto t1 = std::chrono::steady_clock::now();
        ep.wall_seconds =
            cfg.deterministic ? 0.0 : std::chrono::duration<double>(t1 - t0).count();

        result.log.push_back(ep);
        result.centers.push_back(epoch_centers);
        if (writing) {
            log_file << format_epoch_log(ep) << '\n';
            log_file.flush();
            char cbuf[64];
            for (const auto& [cx, cy] : epoch_centers) {
                std::snprintf(cbuf, sizeof(cbuf), "%d\t%.4f\t%.4f", epoch, cx, cy);
                centers_file << cbuf << '\n';
            }
            centers_file.flush();
            if (epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
                char name[64];
                std::snprintf(name, sizeof(name), "/checkpoint_ep%04d.lrk", epoch);
                save_checkpoint(cfg.out_dir + name, params, optim, cfg);
            }
        }
    }

    if (writing) {
        const std::string final_path = cfg.checkpoint_out.empty()
                                           ? cfg.out_dir + "/checkpoint_final.lrk"
                                           : cfg.checkpoint_out;
        save_checkpoint(final_path, params, optim, cfg);
    }

    result.params = std::move(params);
    result.optim = std::move(optim);
    return result;
}

double score_image_tta(const Tensor& image, const ModelParams& params, const RunConfig& cfg) {
    const int w = image.dim(2), h = image.dim(1);
    const int cs = cfg.crop_size;
    if (cs > w || cs > h) throw ConfigError("score_image_tta: crop larger than image");
    const int mx = w - cs, my = h - cs;
    const std::array<std::pair<int, int>, 5> origins{
        std::make_pair(0, 0),           std::make_pair(mx, 0), std::make_pair(0, my),
        std::make_pair(mx, my),         std::make_pair(mx / 2, my / 2)};

    double acc = 0.0;
    int count = 0;
    for (const auto& [ox, oy] : origins) {
        const Tensor crop = crop_image(image, ox, oy, cs);
        acc += score_branch(crop, params, params.arch.use_global).v;
        ++count;
        if (cfg.tta_flips) {
            acc += score_branch(mirror_image(crop), params, params.arch.use_global).v;
            ++count;
        }
    }
    return acc / count;
}

}  // namespace locrank
