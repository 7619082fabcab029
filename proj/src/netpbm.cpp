#include "locrank/netpbm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "locrank/errors.hpp"

namespace locrank {

namespace {

// Skips whitespace and '#' comments, then parses one decimal token.
int next_int(const std::string& b, size_t& pos, const std::string& name) {
    while (pos < b.size()) {
        const char c = b[pos];
        if (c == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
        throw ConfigError("malformed netpbm header in " + name);
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        ++pos;
        if (v > 1 << 24) throw ConfigError("absurd dimension in netpbm header: " + name);
    }
    return static_cast<int>(v);
}

}  // namespace

Tensor decode_netpbm(const std::string& b, const std::string& name) {
    if (b.size() < 2 || b[0] != 'P' || (b[1] != '5' && b[1] != '6'))
        throw ConfigError("unsupported image magic in " + name + " (want P5 or P6)");
    const int channels = b[1] == '5' ? 1 : 3;
    size_t pos = 2;
    const int w = next_int(b, pos, name);
    const int h = next_int(b, pos, name);
    const int maxval = next_int(b, pos, name);
    if (maxval != 255)
        throw ConfigError("unsupported maxval " + std::to_string(maxval) + " in " + name +
                          " (only 255)");
    if (pos >= b.size()) throw ConfigError("truncated image: " + name);
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(w) * h * channels;
    if (b.size() - pos < need) throw ConfigError("truncated pixel data in " + name);

    Tensor img({channels, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const unsigned char px = static_cast<unsigned char>(b[pos++]);
                img.at(c, y, x) = px / 255.0;
            }
    return img;
}

std::string encode_netpbm(const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw ConfigError("write_image: need [1,H,W] or [3,H,W], got " + image.shape_str());
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::ostringstream head;
    head << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::string out = head.str();
    out.reserve(out.size() + static_cast<size_t>(w) * h * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ic = 0; ic < c; ++ic) {
                double v = image.at(ic, y, x);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
            }
    return out;
}

Tensor read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open image: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_netpbm(bytes, path);
}

void write_image(const std::string& path, const Tensor& image) {
    const std::string bytes = encode_netpbm(image);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write image: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RuntimeFailure("short write to image: " + path);
}

}  // namespace locrank
