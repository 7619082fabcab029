#include "locrank/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <sstream>
#include <vector>

#include <fstream>

#include "locrank/errors.hpp"

namespace locrank {

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config key '" + key + "': expected 0/1/true/false, got '" + v + "'");
}

struct KeyDef {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<KeyDef> schema() {
    std::vector<KeyDef> keys;
    auto add_int = [&](const std::string& n, int RunConfig::* f) {
        keys.push_back({n, [f](const RunConfig& c) { return std::to_string(c.*f); },
                        [f, n](RunConfig& c, const std::string& v) {
                            c.*f = static_cast<int>(parse_int(n, v));
                        }});
    };
    auto add_u64 = [&](const std::string& n, std::uint64_t RunConfig::* f) {
        keys.push_back({n, [f](const RunConfig& c) { return std::to_string(c.*f); },
                        [f, n](RunConfig& c, const std::string& v) {
                            c.*f = static_cast<std::uint64_t>(parse_int(n, v));
                        }});
    };
    auto add_double = [&](const std::string& n, double RunConfig::* f) {
        keys.push_back({n, [f](const RunConfig& c) { return fmt_double(c.*f); },
                        [f, n](RunConfig& c, const std::string& v) { c.*f = parse_double(n, v); }});
    };
    auto add_bool = [&](const std::string& n, bool RunConfig::* f) {
        keys.push_back({n, [f](const RunConfig& c) { return c.*f ? "1" : "0"; },
                        [f, n](RunConfig& c, const std::string& v) { c.*f = parse_bool(n, v); }});
    };
    auto add_str = [&](const std::string& n, std::string RunConfig::* f) {
        keys.push_back({n, [f](const RunConfig& c) { return c.*f; },
                        [f](RunConfig& c, const std::string& v) { c.*f = v; }});
    };

    add_int("epochs", &RunConfig::epochs);
    add_int("batch_size", &RunConfig::batch_size);
    add_double("lr_rn", &RunConfig::lr_rn);
    add_double("lr_stn", &RunConfig::lr_stn);
    add_double("scale_lr_factor", &RunConfig::scale_lr_factor);
    add_double("momentum", &RunConfig::momentum);
    add_double("st_loss_weight", &RunConfig::st_loss_weight);
    add_int("stage", &RunConfig::stage);
    add_u64("seed", &RunConfig::seed);
    add_int("checkpoint_every", &RunConfig::checkpoint_every);
    add_double("s_init", &RunConfig::s_init);
    add_double("s_min", &RunConfig::s_min);
    add_double("s_max", &RunConfig::s_max);
    add_double("t_init_range", &RunConfig::t_init_range);
    add_int("patch_size", &RunConfig::patch_size);
    add_int("image_size", &RunConfig::image_size);
    add_int("crop_size", &RunConfig::crop_size);
    add_int("channels", &RunConfig::channels);
    add_int("n_images", &RunConfig::n_images);
    add_int("n_test_images", &RunConfig::n_test_images);
    add_int("n_pairs", &RunConfig::n_pairs);
    add_int("n_test_pairs", &RunConfig::n_test_pairs);
    add_double("eps", &RunConfig::eps);
    add_double("clutter_level", &RunConfig::clutter_level);
    add_double("r_min", &RunConfig::r_min);
    add_double("r_max", &RunConfig::r_max);
    add_str("position_mode", &RunConfig::position_mode);
    add_double("eq_tol_scale", &RunConfig::eq_tol_scale);
    add_bool("tta_flips", &RunConfig::tta_flips);
    add_double("heatmap_sigma", &RunConfig::heatmap_sigma);
    add_int("strip_k", &RunConfig::strip_k);
    add_str("out_dir", &RunConfig::out_dir);
    add_str("checkpoint_in", &RunConfig::checkpoint_in);
    add_str("checkpoint_out", &RunConfig::checkpoint_out);
    add_str("train_manifest", &RunConfig::train_manifest);
    add_str("test_manifest", &RunConfig::test_manifest);
    add_str("truth_sidecar", &RunConfig::truth_sidecar);
    add_str("data_root", &RunConfig::data_root);
    add_str("centers_log", &RunConfig::centers_log);
    add_int("threads", &RunConfig::threads);
    add_bool("deterministic", &RunConfig::deterministic);
    return keys;
}

const std::vector<KeyDef>& schema_cached() {
    static const std::vector<KeyDef> s = schema();
    return s;
}

const KeyDef* find_key(const std::string& name) {
    for (const KeyDef& k : schema_cached())
        if (k.name == name) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
    auto positive = [](long long v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    positive(patch_size, "patch_size");
    positive(image_size, "image_size");
    positive(crop_size, "crop_size");
    positive(channels, "channels");
    positive(checkpoint_every, "checkpoint_every");
    if (crop_size > image_size) throw ConfigError("config: crop_size must be <= image_size");
    if (stage != 1 && stage != 2) throw ConfigError("config: stage must be 1 or 2");
    if (!(lr_rn >= 0) || !(lr_stn >= 0)) throw ConfigError("config: learning rates must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("config: momentum must be in [0,1)");
    if (!(eps >= 0)) throw ConfigError("config: eps must be >= 0");
    if (!(s_min > 0 && s_max > s_min)) throw ConfigError("config: need 0 < s_min < s_max");
    if (!(r_min > 0 && r_max >= r_min)) throw ConfigError("config: need 0 < r_min <= r_max");
    if (position_mode != "fixed-region" && position_mode != "uniform")
        throw ConfigError("config: position_mode must be 'fixed-region' or 'uniform'");
    if (threads < 0) throw ConfigError("config: threads must be >= 0");
}

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source_name + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + t + "'");
        apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    const KeyDef* def = find_key(key);
    if (!def) throw ConfigError("unknown config key '" + key + "'");
    def->set(cfg, value);
}

std::string dump_config(const RunConfig& cfg) {
    // Schema order is already stable; sort by name for a canonical file.
    std::vector<const KeyDef*> keys;
    for (const KeyDef& k : schema_cached()) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(),
              [](const KeyDef* a, const KeyDef* b) { return a->name < b->name; });
    std::string out;
    for (const KeyDef* k : keys) {
        out += k->name;
        out += '=';
        out += k->get(cfg);
        out += '\n';
    }
    return out;
}

}  // namespace locrank
