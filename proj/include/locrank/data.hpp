#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "locrank/tensor.hpp"

namespace locrank {

// Pair of images compared by attribute strength. L = 1 means the first is
// stronger (set Q); L = 0.5 means the two are similar (set E). Q pairs are
// always stored stronger-first.
struct ComparisonPair {
    int first = -1;
    int second = -1;
    double L = 1.0;
};

struct SyntheticSample {
    Tensor image;          // [1,H,W]
    double strength = 0.0; // generative parameter in [0,1]
    double center_x = 0.0; // blob center, pixels
    double center_y = 0.0;
    double radius = 0.0;
};

enum class PositionMode { kFixedRegion, kUniform };
PositionMode parse_position_mode(const std::string& s);

struct SyntheticConfig {
    int image_w = 64;
    int image_h = 64;
    double clutter_level = 0.3;
    double r_min = 3.0;
    double r_max = 10.0;
    PositionMode mode = PositionMode::kFixedRegion;
};

// Background clutter plus one attribute blob whose radius grows linearly
// with strength. fixed-region jitters the blob inside the top-left image
// quadrant; uniform places it anywhere in the interior.
std::vector<SyntheticSample> gen_synthetic(int n_images, const SyntheticConfig& cfg,
                                           std::uint64_t seed);

// One sample with explicit strength and blob position; clutter drawn from
// clutter_seed. gen_synthetic is a loop over this.
SyntheticSample render_synthetic_sample(const SyntheticConfig& cfg, double strength, double cx,
                                        double cy, std::uint64_t clutter_seed);

// Random pairs: |strength gap| <= eps joins set E, otherwise set Q ordered
// stronger-first.
std::vector<ComparisonPair> make_pairs(const std::vector<SyntheticSample>& samples, int n_pairs,
                                       double eps, std::uint64_t seed);

// Q pairs only (test-set construction); same gap rule, draws until n found.
std::vector<ComparisonPair> make_q_pairs(const std::vector<SyntheticSample>& samples, int n_pairs,
                                         double eps, std::uint64_t seed);

// Manifest: path<TAB>path<TAB>{gt|eq} per line, '#' comments.
struct ManifestRecord {
    std::string path1;
    std::string path2;
    double L = 1.0;
};
struct DatasetManifest {
    std::string root;
    std::vector<ManifestRecord> records;
};

DatasetManifest load_manifest(const std::string& path, const std::string& root);
void write_manifest(const std::string& path, const std::vector<ManifestRecord>& records);

// Images deduplicated by path + index pairs, ready for training/eval.
struct PairDataset {
    std::vector<Tensor> images;
    std::vector<std::string> paths;  // parallel to images; empty for in-memory sets
    std::vector<ComparisonPair> pairs;
};
PairDataset load_pair_dataset(const DatasetManifest& manifest);
PairDataset dataset_from_samples(const std::vector<SyntheticSample>& samples,
                                 const std::vector<ComparisonPair>& pairs);

// Ground-truth sidecar for synthetic data: path, strength, center, radius.
void write_truth_sidecar(const std::string& path, const std::vector<std::string>& image_paths,
                         const std::vector<SyntheticSample>& samples);
struct TruthRecord {
    std::string path;
    double strength, center_x, center_y, radius;
};
std::vector<TruthRecord> load_truth_sidecar(const std::string& path);

}  // namespace locrank
