#include "locrank/stn.hpp"

#include <cmath>
#include <string>

#include "locrank/errors.hpp"

namespace locrank {

namespace {

// Canonical output coordinate of pixel i in a length-P axis: -1 .. 1.
inline double canon(int i, int p) { return p == 1 ? 0.0 : -1.0 + 2.0 * i / (p - 1); }

void fill_grid(Tensor& coords, const Theta& t, int p) {
    for (int gy = 0; gy < p; ++gy) {
        const double yo = canon(gy, p);
        for (int gx = 0; gx < p; ++gx) {
            const double xo = canon(gx, p);
            coords.at(0, gy, gx) = t.s * (xo + t.tx);
            coords.at(1, gy, gx) = t.s * (yo + t.ty);
        }
    }
}

}  // namespace

SamplingGrid generate_grid(const Theta& theta, int patch_size, int image_w, int image_h) {
    if (patch_size < 2) throw ConfigError("generate_grid: patch size must be >= 2");
    if (image_w < 2 || image_h < 2) throw ConfigError("generate_grid: image must be >= 2x2");
    SamplingGrid grid;
    grid.patch_size = patch_size;
    grid.image_w = image_w;
    grid.image_h = image_h;
    grid.coords = Tensor({2, patch_size, patch_size});
    fill_grid(grid.coords, theta, patch_size);
    return grid;
}

namespace {

struct Taps {
    int x0, y0;
    double fx, fy;  // fractional offsets
    bool in(int ix, int iy, int w, int h) const {
        return ix >= 0 && ix < w && iy >= 0 && iy < h;
    }
};

// Coordinates within 1e-9 px of an integer read that pixel exactly. The
// normalized round trip leaves ~1e-14 px of float noise on what is
// mathematically an integer coordinate; snapping it keeps the identity
// warp an exact copy.
inline double snap_px(double p) {
    const double r = std::nearbyint(p);
    return std::abs(p - r) < 1e-9 ? r : p;
}

inline Taps taps_for(double px, double py) {
    px = snap_px(px);
    py = snap_px(py);
    Taps t;
    t.x0 = static_cast<int>(std::floor(px));
    t.y0 = static_cast<int>(std::floor(py));
    t.fx = px - t.x0;
    t.fy = py - t.y0;
    return t;
}

inline double read0(const Tensor& img, int c, int iy, int ix, int w, int h) {
    if (ix < 0 || ix >= w || iy < 0 || iy >= h) return 0.0;
    return img.at(c, iy, ix);
}

}  // namespace

Tensor bilinear_sample(const Tensor& image, const SamplingGrid& grid) {
    if (image.rank() != 3)
        throw ConfigError("bilinear_sample: image must be [C,H,W], got " + image.shape_str());
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (w != grid.image_w || h != grid.image_h)
        throw ConfigError("bilinear_sample: grid generated for " + std::to_string(grid.image_w) +
                          "x" + std::to_string(grid.image_h) + ", image is " + std::to_string(w) +
                          "x" + std::to_string(h));
    const int p = grid.patch_size;
    Tensor out({c, p, p});
    for (int gy = 0; gy < p; ++gy) {
        for (int gx = 0; gx < p; ++gx) {
            const double px = (grid.coords.at(0, gy, gx) + 1.0) / 2.0 * (w - 1);
            const double py = (grid.coords.at(1, gy, gx) + 1.0) / 2.0 * (h - 1);
            const Taps t = taps_for(px, py);
            for (int ic = 0; ic < c; ++ic) {
                const double v00 = read0(image, ic, t.y0, t.x0, w, h);
                const double v01 = read0(image, ic, t.y0, t.x0 + 1, w, h);
                const double v10 = read0(image, ic, t.y0 + 1, t.x0, w, h);
                const double v11 = read0(image, ic, t.y0 + 1, t.x0 + 1, w, h);
                out.at(ic, gy, gx) = (1 - t.fy) * ((1 - t.fx) * v00 + t.fx * v01) +
                                     t.fy * ((1 - t.fx) * v10 + t.fx * v11);
            }
        }
    }
    return out;
}

std::pair<double, double> patch_center_px(const Theta& theta, int image_w, int image_h) {
    const double cx = (theta.s * theta.tx + 1.0) / 2.0 * (image_w - 1);
    const double cy = (theta.s * theta.ty + 1.0) / 2.0 * (image_h - 1);
    return {cx, cy};
}

bool center_in_bounds(double cx, double cy, int image_w, int image_h) {
    return cx >= 0.0 && cx <= image_w - 1.0 && cy >= 0.0 && cy <= image_h - 1.0;
}

PatchBox patch_box_px(const Theta& theta, int image_w, int image_h) {
    const double xa = (theta.s * (-1.0 + theta.tx) + 1.0) / 2.0 * (image_w - 1);
    const double xb = (theta.s * (1.0 + theta.tx) + 1.0) / 2.0 * (image_w - 1);
    const double ya = (theta.s * (-1.0 + theta.ty) + 1.0) / 2.0 * (image_h - 1);
    const double yb = (theta.s * (1.0 + theta.ty) + 1.0) / 2.0 * (image_h - 1);
    return {std::min(xa, xb), std::min(ya, yb), std::max(xa, xb), std::max(ya, yb)};
}

GridNode generate_grid_node(Graph& g, Value s, Value tx, Value ty, int patch_size, int image_w,
                            int image_h) {
    if (patch_size < 2) throw ConfigError("generate_grid: patch size must be >= 2");
    const Theta t{g.val(s).at(0), g.val(tx).at(0), g.val(ty).at(0)};
    Tensor coords({2, patch_size, patch_size});
    fill_grid(coords, t, patch_size);
    const int p = patch_size;
    Value v = g.node(std::move(coords), {s, tx, ty}, [=](Graph& gg, const Tensor& gout) {
        const double sv = gg.val(s).at(0);
        const double txv = gg.val(tx).at(0);
        const double tyv = gg.val(ty).at(0);
        double gs = 0.0, gtx = 0.0, gty = 0.0;
        for (int gy = 0; gy < p; ++gy) {
            const double yo = canon(gy, p);
            for (int gx = 0; gx < p; ++gx) {
                const double xo = canon(gx, p);
                const double gxc = gout.at(0, gy, gx);
                const double gyc = gout.at(1, gy, gx);
                gs += gxc * (xo + txv) + gyc * (yo + tyv);
                gtx += gxc * sv;
                gty += gyc * sv;
            }
        }
        gg.accum_at(s, 0, gs);
        gg.accum_at(tx, 0, gtx);
        gg.accum_at(ty, 0, gty);
    });
    return GridNode{v, patch_size, image_w, image_h};
}

Value bilinear_sample_node(Graph& g, Value image, const GridNode& grid) {
    const Tensor& img = g.val(image);
    if (img.rank() != 3)
        throw ConfigError("bilinear_sample: image must be [C,H,W], got " + img.shape_str());
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (w != grid.image_w || h != grid.image_h)
        throw ConfigError("bilinear_sample: grid generated for " + std::to_string(grid.image_w) +
                          "x" + std::to_string(grid.image_h) + ", image is " + std::to_string(w) +
                          "x" + std::to_string(h));
    const int p = grid.patch_size;

    SamplingGrid tmp;
    tmp.patch_size = p;
    tmp.image_w = w;
    tmp.image_h = h;
    tmp.coords = g.val(grid.coords);
    Tensor out = bilinear_sample(img, tmp);

    const Value coords = grid.coords;
    return g.node(std::move(out), {image, coords}, [=](Graph& gg, const Tensor& gout) {
        const Tensor& imgv = gg.val(image);
        const Tensor& cv = gg.val(coords);
        double* gimg = gg.grad_buf(image);
        double* gcoords = gg.grad_buf(coords);
        const double sx = (w - 1) / 2.0;  // d(px)/d(x_norm)
        const double sy = (h - 1) / 2.0;
        for (int gy = 0; gy < p; ++gy) {
            for (int gx = 0; gx < p; ++gx) {
                const double px = (cv.at(0, gy, gx) + 1.0) / 2.0 * (w - 1);
                const double py = (cv.at(1, gy, gx) + 1.0) / 2.0 * (h - 1);
                const Taps t = taps_for(px, py);
                double gpx = 0.0, gpy = 0.0;
                for (int ic = 0; ic < c; ++ic) {
                    const double gv = gout.at(ic, gy, gx);
                    if (gv == 0.0) continue;
                    const double v00 = read0(imgv, ic, t.y0, t.x0, w, h);
                    const double v01 = read0(imgv, ic, t.y0, t.x0 + 1, w, h);
                    const double v10 = read0(imgv, ic, t.y0 + 1, t.x0, w, h);
                    const double v11 = read0(imgv, ic, t.y0 + 1, t.x0 + 1, w, h);
                    if (gimg) {
                        if (t.in(t.x0, t.y0, w, h))
                            gimg[(ic * h + t.y0) * w + t.x0] += gv * (1 - t.fy) * (1 - t.fx);
                        if (t.in(t.x0 + 1, t.y0, w, h))
                            gimg[(ic * h + t.y0) * w + t.x0 + 1] += gv * (1 - t.fy) * t.fx;
                        if (t.in(t.x0, t.y0 + 1, w, h))
                            gimg[(ic * h + t.y0 + 1) * w + t.x0] += gv * t.fy * (1 - t.fx);
                        if (t.in(t.x0 + 1, t.y0 + 1, w, h))
                            gimg[(ic * h + t.y0 + 1) * w + t.x0 + 1] += gv * t.fy * t.fx;
                    }
                    if (gcoords) {
                        gpx += gv * ((1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
                        gpy += gv * ((1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
                    }
                }
                if (gcoords) {
                    gcoords[(0 * p + gy) * p + gx] += gpx * sx;
                    gcoords[(1 * p + gy) * p + gx] += gpy * sy;
                }
            }
        }
    });
}

Value patch_center_node(Graph& g, Value s, Value tx, Value ty, int image_w, int image_h) {
    const double sv = g.val(s).at(0);
    const double txv = g.val(tx).at(0);
    const double tyv = g.val(ty).at(0);
    Tensor out({2});
    out.at(0) = (sv * txv + 1.0) / 2.0 * (image_w - 1);
    out.at(1) = (sv * tyv + 1.0) / 2.0 * (image_h - 1);
    return g.node(std::move(out), {s, tx, ty}, [=](Graph& gg, const Tensor& gout) {
        const double svv = gg.val(s).at(0);
        const double txvv = gg.val(tx).at(0);
        const double tyvv = gg.val(ty).at(0);
        const double hx = (image_w - 1) / 2.0;
        const double hy = (image_h - 1) / 2.0;
        gg.accum_at(s, 0, gout.at(0) * txvv * hx + gout.at(1) * tyvv * hy);
        gg.accum_at(tx, 0, gout.at(0) * svv * hx);
        gg.accum_at(ty, 0, gout.at(1) * svv * hy);
    });
}

}  // namespace locrank
