#include "locrank/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "locrank/errors.hpp"
#include "locrank/netpbm.hpp"
#include "locrank/rng.hpp"

namespace locrank {

PositionMode parse_position_mode(const std::string& s) {
    if (s == "fixed-region") return PositionMode::kFixedRegion;
    if (s == "uniform") return PositionMode::kUniform;
    throw ConfigError("unknown position_mode '" + s + "'");
}

namespace {

// Soft disk: flat core, sharp falloff around d = r. Smooth everywhere so
// bilinear sampling sees usable gradients at the blob edge.
inline double blob_profile(double d, double r) {
    const double q = d / r;
    const double q2 = q * q;
    return std::exp(-q2 * q2);
}

void add_blob(Tensor& img, double cx, double cy, double r, double amp) {
    const int h = img.dim(1), w = img.dim(2);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - 2 * r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + 2 * r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - 2 * r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + 2 * r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
            img.at(0, y, x) += amp * blob_profile(d, r);
        }
}

int blob_margin(double r_max) { return static_cast<int>(std::ceil(1.5 * r_max)); }

SyntheticSample render_sample(const SyntheticConfig& cfg, double strength, double cx, double cy,
                              Rng& rng) {
    SyntheticSample s;
    s.strength = strength;
    s.center_x = cx;
    s.center_y = cy;
    s.radius = cfg.r_min + strength * (cfg.r_max - cfg.r_min);
    s.image = Tensor({1, cfg.image_h, cfg.image_w});

    // Clutter: a handful of faint distractor blobs plus pixel noise.
    const int n_clutter = 6;
    for (int i = 0; i < n_clutter; ++i) {
        const double bx = rng.uniform(0.0, cfg.image_w - 1.0);
        const double by = rng.uniform(0.0, cfg.image_h - 1.0);
        const double br = rng.uniform(1.5, 4.5);
        const double amp = cfg.clutter_level * rng.uniform(0.3, 1.0);
        if (amp > 0) add_blob(s.image, bx, by, br, amp);
    }
    const double noise_amp = 0.05 * cfg.clutter_level;
    if (noise_amp > 0)
        for (double& v : s.image.data) v += rng.uniform(0.0, noise_amp);

    add_blob(s.image, cx, cy, s.radius, 1.0);

    for (double& v : s.image.data) v = v < 0 ? 0 : (v > 1 ? 1 : v);
    return s;
}

}  // namespace

SyntheticSample render_synthetic_sample(const SyntheticConfig& cfg, double strength, double cx,
                                        double cy, std::uint64_t clutter_seed) {
    Rng rng(clutter_seed);
    return render_sample(cfg, strength, cx, cy, rng);
}

std::vector<SyntheticSample> gen_synthetic(int n_images, const SyntheticConfig& cfg,
                                           std::uint64_t seed) {
    if (n_images < 2) throw ConfigError("gen_synthetic: need at least 2 images");
    const int margin = blob_margin(cfg.r_max);
    if (2 * margin >= std::min(cfg.image_w, cfg.image_h))
        throw ConfigError("gen_synthetic: image " + std::to_string(cfg.image_w) + "x" +
                          std::to_string(cfg.image_h) + " too small for r_max " +
                          std::to_string(cfg.r_max));
    const bool fixed = cfg.mode == PositionMode::kFixedRegion;
    // fixed-region: a tight jitter box around a fixed spot in the top-left
    // quadrant, mirroring roughly-aligned attributes (the localizer's
    // center distribution should collapse onto it). uniform: anywhere in
    // the interior.
    double x_lo = margin, x_hi = cfg.image_w - 1.0 - margin;
    double y_lo = margin, y_hi = cfg.image_h - 1.0 - margin;
    if (fixed) {
        const double jitter = std::max(2.0, 0.035 * std::min(cfg.image_w, cfg.image_h));
        x_lo = std::max(x_lo, 0.3 * cfg.image_w - jitter);
        x_hi = std::min(cfg.image_w / 2.0 - 1.0, 0.3 * cfg.image_w + jitter);
        y_lo = std::max(y_lo, 0.3 * cfg.image_h - jitter);
        y_hi = std::min(cfg.image_h / 2.0 - 1.0, 0.3 * cfg.image_h + jitter);
    }
    if (x_hi <= x_lo || y_hi <= y_lo)
        throw ConfigError("gen_synthetic: no room for blob centers with r_max " +
                          std::to_string(cfg.r_max));

    Rng rng(seed);
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<size_t>(n_images));
    for (int i = 0; i < n_images; ++i) {
        const double strength = rng.uniform();
        const double cx = rng.uniform(x_lo, x_hi);
        const double cy = rng.uniform(y_lo, y_hi);
        out.push_back(render_sample(cfg, strength, cx, cy, rng));
    }
    return out;
}

std::vector<ComparisonPair> make_pairs(const std::vector<SyntheticSample>& samples, int n_pairs,
                                       double eps, std::uint64_t seed) {
    if (samples.size() < 2) throw ConfigError("make_pairs: need at least 2 samples");
    if (eps < 0) throw ConfigError("make_pairs: eps must be >= 0");
    Rng rng(seed);
    const int n = static_cast<int>(samples.size());
    std::vector<ComparisonPair> out;
    out.reserve(static_cast<size_t>(n_pairs));
    while (static_cast<int>(out.size()) < n_pairs) {
        int i = rng.uniform_int(n);
        int j = rng.uniform_int(n);
        if (i == j) continue;
        const double gap = samples[static_cast<size_t>(i)].strength -
                           samples[static_cast<size_t>(j)].strength;
        if (std::abs(gap) <= eps) {
            out.push_back({i, j, 0.5});
        } else {
            if (gap < 0) std::swap(i, j);  // stronger image first
            out.push_back({i, j, 1.0});
        }
    }
    return out;
}

std::vector<ComparisonPair> make_q_pairs(const std::vector<SyntheticSample>& samples, int n_pairs,
                                         double eps, std::uint64_t seed) {
    if (samples.size() < 2) throw ConfigError("make_q_pairs: need at least 2 samples");
    Rng rng(seed);
    const int n = static_cast<int>(samples.size());
    std::vector<ComparisonPair> out;
    long attempts = 0;
    const long max_attempts = 1000L * n_pairs + 1000;
    while (static_cast<int>(out.size()) < n_pairs) {
        if (++attempts > max_attempts)
            throw ConfigError("make_q_pairs: cannot find enough pairs with gap > eps");
        int i = rng.uniform_int(n);
        int j = rng.uniform_int(n);
        if (i == j) continue;
        const double gap = samples[static_cast<size_t>(i)].strength -
                           samples[static_cast<size_t>(j)].strength;
        if (std::abs(gap) <= eps) continue;
        if (gap < 0) std::swap(i, j);
        out.push_back({i, j, 1.0});
    }
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path, const std::string& root) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open manifest: " + path);
    DatasetManifest m;
    m.root = root;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 3)
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected path<TAB>path<TAB>{gt|eq}, got " +
                              std::to_string(cols.size()) + " columns");
        double L;
        if (cols[2] == "gt")
            L = 1.0;
        else if (cols[2] == "eq")
            L = 0.5;
        else
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown label '" + cols[2] +
                              "' (want gt or eq)");
        m.records.push_back({cols[0], cols[1], L});
    }
    return m;
}

void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write manifest: " + path);
    f << "# path1\tpath2\tlabel\n";
    for (const ManifestRecord& r : records)
        f << r.path1 << '\t' << r.path2 << '\t' << (r.L == 1.0 ? "gt" : "eq") << '\n';
}

namespace {

std::string join_path(const std::string& root, const std::string& rel) {
    if (root.empty() || (!rel.empty() && rel[0] == '/')) return rel;
    return root + "/" + rel;
}

}  // namespace

PairDataset load_pair_dataset(const DatasetManifest& manifest) {
    PairDataset ds;
    std::map<std::string, int> index;
    auto intern = [&](const std::string& rel) {
        auto it = index.find(rel);
        if (it != index.end()) return it->second;
        const int id = static_cast<int>(ds.images.size());
        ds.images.push_back(read_image(join_path(manifest.root, rel)));
        ds.paths.push_back(rel);
        index[rel] = id;
        return id;
    };
    for (const ManifestRecord& r : manifest.records)
        ds.pairs.push_back({intern(r.path1), intern(r.path2), r.L});
    return ds;
}

PairDataset dataset_from_samples(const std::vector<SyntheticSample>& samples,
                                 const std::vector<ComparisonPair>& pairs) {
    PairDataset ds;
    ds.images.reserve(samples.size());
    for (const SyntheticSample& s : samples) ds.images.push_back(s.image);
    ds.pairs = pairs;
    return ds;
}

void write_truth_sidecar(const std::string& path, const std::vector<std::string>& image_paths,
                         const std::vector<SyntheticSample>& samples) {
    if (image_paths.size() != samples.size())
        throw UsageError("truth sidecar: path/sample count mismatch");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write sidecar: " + path);
    f << "# path\tstrength\tcenter_x\tcenter_y\tradius\n";
    f.precision(10);
    for (size_t i = 0; i < samples.size(); ++i)
        f << image_paths[i] << '\t' << samples[i].strength << '\t' << samples[i].center_x << '\t'
          << samples[i].center_y << '\t' << samples[i].radius << '\n';
}

std::vector<TruthRecord> load_truth_sidecar(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open sidecar: " + path);
    std::vector<TruthRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 5)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 5 columns, got " +
                              std::to_string(cols.size()));
        TruthRecord r;
        r.path = cols[0];
        try {
            r.strength = std::stod(cols[1]);
            r.center_x = std::stod(cols[2]);
            r.center_y = std::stod(cols[3]);
            r.radius = std::stod(cols[4]);
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": bad numeric field");
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace locrank
