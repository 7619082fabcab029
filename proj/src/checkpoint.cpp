#include "locrank/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "locrank/errors.hpp"
#include "locrank/rng.hpp"

namespace locrank {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw RuntimeFailure("truncated checkpoint file: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_tensor(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data) put_f64(out, v);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, const OptimState& optim,
                     const RunConfig& config) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);

    const std::string cfg = dump_config(config);
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;

    put_u32(out, static_cast<std::uint32_t>(params.tensors.size() + optim.velocity.size()));
    for (const auto& [name, t] : params.tensors) put_tensor(out, "param." + name, t);
    for (const auto& [name, t] : optim.velocity) put_tensor(out, "velocity." + name, t);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw RuntimeFailure("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf, 0, path};
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw RuntimeFailure("not a checkpoint (bad magic): " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw RuntimeFailure("unsupported checkpoint version " + std::to_string(version) + ": " +
                             path);

    const std::uint32_t cfg_len = r.u32();
    Checkpoint ck;
    ck.config = parse_config_text(r.bytes(cfg_len), path + "(config)");

    ModelArch arch;
    arch.channels = ck.config.channels;
    arch.input_size = ck.config.crop_size;
    arch.patch_size = ck.config.patch_size;
    arch.use_global = ck.config.stage == 2;
    arch.s_init = ck.config.s_init;
    arch.s_min = ck.config.s_min;
    arch.s_max = ck.config.s_max;
    arch.t_init_range = ck.config.t_init_range;
    arch.scale_lr_factor = ck.config.scale_lr_factor;
    ck.params.arch = arch;
    ck.optim = make_optim_state(ck.config.lr_rn, ck.config.lr_stn, ck.config.momentum);

    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
        Tensor t(shape);
        for (double& v : t.data) v = r.f64();
        if (name.rfind("param.", 0) == 0)
            ck.params.tensors[name.substr(6)] = std::move(t);
        else if (name.rfind("velocity.", 0) == 0)
            ck.optim.velocity[name.substr(9)] = std::move(t);
        else
            throw RuntimeFailure("unknown tensor class '" + name + "' in " + path);
    }

    // Stored tensors must match the architecture the embedded config declares.
    Rng probe_rng(0);
    const ModelParams expect = init_params(arch, probe_rng);
    for (const auto& [name, t] : expect.tensors) {
        auto it = ck.params.tensors.find(name);
        if (it == ck.params.tensors.end())
            throw RuntimeFailure("checkpoint " + path + " is missing tensor " + name);
        if (!it->second.same_shape(t))
            throw RuntimeFailure("checkpoint " + path + ": tensor " + name + " has shape " +
                                 it->second.shape_str() + ", architecture wants " + t.shape_str());
    }
    return ck;
}

std::vector<std::string> adopt_matching(ModelParams& into, const ModelParams& from) {
    std::vector<std::string> adopted;
    for (auto& [name, t] : into.tensors) {
        auto it = from.tensors.find(name);
        if (it != from.tensors.end() && it->second.same_shape(t)) {
            t = it->second;
            adopted.push_back(name);
        }
    }
    return adopted;
}

}  // namespace locrank
