#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace locrank {

// Every knob of a run. Serialized as flat key=value text; parse/dump share
// one schema table so unknown or ill-typed keys fail loudly.
struct RunConfig {
    // training
    int epochs = 50;
    int batch_size = 25;
    double lr_rn = 0.001;
    double lr_stn = 0.0001;
    double scale_lr_factor = 0.1;
    double momentum = 0.9;
    double st_loss_weight = 1.0;
    int stage = 1;
    std::uint64_t seed = 0;
    int checkpoint_every = 10;
    // model
    double s_init = 0.5;
    double s_min = 0.05;
    double s_max = 2.0;
    double t_init_range = 0.3;
    int patch_size = 32;
    int image_size = 64;
    int crop_size = 56;
    int channels = 1;
    // synthetic data generation
    int n_images = 400;
    int n_test_images = 200;
    int n_pairs = 800;
    int n_test_pairs = 200;
    double eps = 0.1;
    double clutter_level = 0.3;
    double r_min = 3.0;
    double r_max = 8.0;
    std::string position_mode = "fixed-region";
    // evaluation / visualization
    double eq_tol_scale = 0.1;
    bool tta_flips = true;
    double heatmap_sigma = 2.0;
    int strip_k = 8;
    // paths
    std::string out_dir = "out";
    std::string checkpoint_in;
    std::string checkpoint_out;
    std::string train_manifest;
    std::string test_manifest;
    std::string truth_sidecar;
    std::string data_root;
    std::string centers_log;
    // execution
    int threads = 0;  // 0 = hardware concurrency
    bool deterministic = false;

    void validate() const;
};

// Parse key=value lines ('#' comments, blank lines allowed). Unknown keys or
// unparsable values throw ConfigError naming the key and line.
RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig load_config_file(const std::string& path);

// Apply one override on top of an existing config (command line layer).
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical dump: every key, sorted, one per line. Reparsing reproduces the
// config exactly.
std::string dump_config(const RunConfig& cfg);

}  // namespace locrank
