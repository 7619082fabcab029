#include "locrank/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "locrank/errors.hpp"
#include "locrank/netpbm.hpp"
#include "locrank/train.hpp"

namespace locrank {

namespace {

// "hot" ramp: black -> red -> yellow -> white over t in [0,1].
void hot_ramp(double t, double& r, double& g, double& b) {
    r = std::min(1.0, 3.0 * t);
    g = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
    b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

Tensor to_rgb(const Tensor& image) {
    if (image.dim(0) == 3) return image;
    Tensor out({3, image.dim(1), image.dim(2)});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < image.dim(1); ++y)
            for (int x = 0; x < image.dim(2); ++x) out.at(c, y, x) = image.at(0, y, x);
    return out;
}

}  // namespace

Tensor render_heatmap(const std::vector<std::pair<double, double>>& centers, int image_w,
                      int image_h, double sigma, const Tensor* background) {
    Tensor hist({1, image_h, image_w});
    for (const auto& [cx, cy] : centers) {
        const int x = static_cast<int>(std::lround(cx));
        const int y = static_cast<int>(std::lround(cy));
        if (x >= 0 && x < image_w && y >= 0 && y < image_h) hist.at(0, y, x) += 1.0;
    }

    if (sigma > 0) {
        const std::vector<double> k = gaussian_kernel(sigma);
        const int radius = static_cast<int>(k.size() / 2);
        Tensor tmp({1, image_h, image_w});
        for (int y = 0; y < image_h; ++y)
            for (int x = 0; x < image_w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = x + i;
                    if (xx >= 0 && xx < image_w)
                        acc += hist.at(0, y, xx) * k[static_cast<size_t>(i + radius)];
                }
                tmp.at(0, y, x) = acc;
            }
        for (int y = 0; y < image_h; ++y)
            for (int x = 0; x < image_w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = y + i;
                    if (yy >= 0 && yy < image_h)
                        acc += tmp.at(0, yy, x) * k[static_cast<size_t>(i + radius)];
                }
                hist.at(0, y, x) = acc;
            }
    }

    double peak = 0.0;
    for (double v : hist.data) peak = std::max(peak, v);
    Tensor heat({3, image_h, image_w});
    for (int y = 0; y < image_h; ++y)
        for (int x = 0; x < image_w; ++x) {
            const double t = peak > 0 ? hist.at(0, y, x) / peak : 0.0;
            double r, g, b;
            hot_ramp(t, r, g, b);
            heat.at(0, y, x) = r;
            heat.at(1, y, x) = g;
            heat.at(2, y, x) = b;
        }

    if (background) {
        const Tensor bg = to_rgb(*background);
        if (bg.dim(1) != image_h || bg.dim(2) != image_w)
            throw ConfigError("heatmap background size mismatch");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < image_h; ++y)
                for (int x = 0; x < image_w; ++x)
                    heat.at(c, y, x) = 0.5 * bg.at(c, y, x) + 0.5 * heat.at(c, y, x);
    }
    return heat;
}

void emit_heatmaps(const std::vector<std::vector<std::pair<double, double>>>& centers_by_epoch,
                   const std::vector<int>& epoch_numbers, int image_w, int image_h, double sigma,
                   const std::string& out_prefix, const Tensor* background) {
    if (centers_by_epoch.empty()) throw UsageError("emit_heatmaps: no epochs logged");
    if (centers_by_epoch.size() != epoch_numbers.size())
        throw UsageError("emit_heatmaps: epoch list size mismatch");
    for (size_t i = 0; i < centers_by_epoch.size(); ++i) {
        const Tensor heat =
            render_heatmap(centers_by_epoch[i], image_w, image_h, sigma, background);
        char name[64];
        std::snprintf(name, sizeof(name), "_ep%04d.ppm", epoch_numbers[i]);
        write_image(out_prefix + name, heat);
    }
}

namespace {

void draw_box(Tensor& rgb, int x0, int y0, int x1, int y1) {
    const int h = rgb.dim(1), w = rgb.dim(2);
    x0 = std::clamp(x0, 0, w - 1);
    x1 = std::clamp(x1, 0, w - 1);
    y0 = std::clamp(y0, 0, h - 1);
    y1 = std::clamp(y1, 0, h - 1);
    auto put = [&](int x, int y) {
        rgb.at(0, y, x) = 1.0;
        rgb.at(1, y, x) = 0.0;
        rgb.at(2, y, x) = 0.0;
    };
    for (int x = x0; x <= x1; ++x) {
        put(x, y0);
        put(x, y1);
    }
    for (int y = y0; y <= y1; ++y) {
        put(x0, y);
        put(x1, y);
    }
}

}  // namespace

Tensor render_ranked_strip(const std::vector<Tensor>& images, const ModelParams& params,
                           const RunConfig& cfg, int k) {
    if (images.empty()) throw UsageError("render_ranked_strip: no images");
    if (k < 1 || k > static_cast<int>(images.size()))
        throw UsageError("render_ranked_strip: k out of range");
    const int h = images[0].dim(1), w = images[0].dim(2);
    const int mx = w - cfg.crop_size, my = h - cfg.crop_size;
    if (mx < 0 || my < 0) throw ConfigError("render_ranked_strip: crop larger than image");

    // Center-crop scores; the drawn box comes from the same forward pass.
    std::vector<double> scores(images.size());
    std::vector<Theta> thetas(images.size());
    for (size_t i = 0; i < images.size(); ++i) {
        const Tensor crop = crop_image(images[i], mx / 2, my / 2, cfg.crop_size);
        const BranchOutput b = score_branch(crop, params, params.arch.use_global);
        scores[i] = b.v;
        thetas[i] = b.theta;
    }
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[static_cast<size_t>(a)] <
                                                scores[static_cast<size_t>(b)]; });

    Tensor strip({3, h, k * w});
    for (int col = 0; col < k; ++col) {
        const int pick = k == 1 ? 0
                                : static_cast<int>(std::lround(
                                      static_cast<double>(col) * (images.size() - 1) / (k - 1)));
        const int idx = order[static_cast<size_t>(pick)];
        Tensor rgb = to_rgb(images[static_cast<size_t>(idx)]);
        const PatchBox box = patch_box_px(thetas[static_cast<size_t>(idx)], cfg.crop_size,
                                          cfg.crop_size);
        draw_box(rgb, static_cast<int>(std::lround(box.x0)) + mx / 2,
                 static_cast<int>(std::lround(box.y0)) + my / 2,
                 static_cast<int>(std::lround(box.x1)) + mx / 2,
                 static_cast<int>(std::lround(box.y1)) + my / 2);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) strip.at(c, y, col * w + x) = rgb.at(c, y, x);
    }
    return strip;
}

void emit_ranked_strip(const std::vector<Tensor>& images, const ModelParams& params,
                       const RunConfig& cfg, int k, const std::string& out_path) {
    write_image(out_path, render_ranked_strip(images, params, cfg, k));
}

CentersLog load_centers_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open centers log: " + path);
    CentersLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        int epoch;
        double cx, cy;
        if (std::sscanf(line.c_str(), "%d\t%lf\t%lf", &epoch, &cx, &cy) != 3)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad centers row");
        if (log.epochs.empty() || log.epochs.back() != epoch) {
            log.epochs.push_back(epoch);
            log.centers.emplace_back();
        }
        log.centers.back().emplace_back(cx, cy);
    }
    if (log.epochs.empty()) throw ConfigError("centers log is empty: " + path);
    return log;
}

}  // namespace locrank
