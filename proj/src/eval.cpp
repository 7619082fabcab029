#include "locrank/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "locrank/errors.hpp"
#include "locrank/train.hpp"

namespace locrank {

std::vector<double> score_dataset(const PairDataset& data, const ModelParams& params,
                                  const RunConfig& cfg, double* seconds_per_image) {
    std::vector<double> scores(data.images.size(), 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    for (size_t i = 0; i < data.images.size(); ++i)
        scores[i] = score_image_tta(data.images[i], params, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    if (seconds_per_image && !data.images.empty())
        *seconds_per_image =
            std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(data.images.size());
    return scores;
}

LocalizedCenter localize_center(const Tensor& image, const ModelParams& params,
                                const RunConfig& cfg) {
    const int mx = image.dim(2) - cfg.crop_size;
    const int my = image.dim(1) - cfg.crop_size;
    if (mx < 0 || my < 0) throw ConfigError("localize_center: crop larger than image");
    const Tensor crop = crop_image(image, mx / 2, my / 2, cfg.crop_size);
    const Theta theta = localize(crop, params);
    auto [cx, cy] = patch_center_px(theta, cfg.crop_size, cfg.crop_size);
    LocalizedCenter out;
    out.in_bounds = center_in_bounds(cx, cy, cfg.crop_size, cfg.crop_size);
    out.x = cx + mx / 2;
    out.y = cy + my / 2;
    return out;
}

EvalReport eval_pairs(const PairDataset& data, const ModelParams& params, const RunConfig& cfg) {
    EvalReport rep;
    const std::vector<double> scores = score_dataset(data, params, cfg, &rep.seconds_per_image);

    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= scores.empty() ? 1.0 : static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= scores.empty() ? 1.0 : static_cast<double>(scores.size());
    rep.eq_tol = cfg.eq_tol_scale * std::sqrt(var);

    int correct_q = 0, close_e = 0;
    for (const ComparisonPair& p : data.pairs) {
        const double v1 = scores[static_cast<size_t>(p.first)];
        const double v2 = scores[static_cast<size_t>(p.second)];
        if (p.L == 1.0) {
            ++rep.n_pairs_q;
            if (v1 > v2) ++correct_q;
        } else {
            ++rep.n_pairs_e;
            if (std::abs(v1 - v2) <= rep.eq_tol) ++close_e;
        }
    }
    rep.accuracy_q = rep.n_pairs_q ? static_cast<double>(correct_q) / rep.n_pairs_q : 0.0;
    rep.accuracy_e = rep.n_pairs_e ? static_cast<double>(close_e) / rep.n_pairs_e : 0.0;

    int oob = 0;
    for (const Tensor& img : data.images)
        if (!localize_center(img, params, cfg).in_bounds) ++oob;
    rep.oob_fraction =
        data.images.empty() ? 0.0 : static_cast<double>(oob) / static_cast<double>(data.images.size());
    return rep;
}

double localization_error(const std::vector<SyntheticSample>& samples, const ModelParams& params,
                          const RunConfig& cfg) {
    if (samples.empty()) throw UsageError("localization_error: no samples");
    double acc = 0.0;
    for (const SyntheticSample& s : samples) {
        const LocalizedCenter c = localize_center(s.image, params, cfg);
        acc += std::hypot(c.x - s.center_x, c.y - s.center_y);
    }
    return acc / static_cast<double>(samples.size());
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    char buf[96];
    os << "n_pairs_q=" << r.n_pairs_q << "\n";
    os << "n_pairs_e=" << r.n_pairs_e << "\n";
    std::snprintf(buf, sizeof(buf), "accuracy_q=%.6f\n", r.accuracy_q);
    os << buf;
    std::snprintf(buf, sizeof(buf), "accuracy_e=%.6f\n", r.accuracy_e);
    os << buf;
    std::snprintf(buf, sizeof(buf), "eq_tol=%.6f\n", r.eq_tol);
    os << buf;
    if (r.mean_center_error_px >= 0) {
        std::snprintf(buf, sizeof(buf), "mean_center_error_px=%.4f\n", r.mean_center_error_px);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "oob_fraction=%.6f\n", r.oob_fraction);
    os << buf;
    std::snprintf(buf, sizeof(buf), "seconds_per_image=%.6f\n", r.seconds_per_image);
    os << buf;
    return os.str();
}

}  // namespace locrank
