#pragma once

#include <utility>

#include "locrank/graph.hpp"
#include "locrank/tensor.hpp"

namespace locrank {

// Inverse-warp parameters: isotropic scale plus translation in normalized
// units. The warp used everywhere is
//   x_in = s * (x_out + t_x),  y_in = s * (y_out + t_y)
// with the canonical output grid spanning [-1,1]^2, so the patch center
// (x_out = y_out = 0) lands at normalized (s*t_x, s*t_y).
struct Theta {
    double s = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

// Normalized input-space sample coordinates for a P x P patch, plus the
// image size the grid was generated for. coords is [2,P,P]: plane 0 holds x,
// plane 1 holds y.
struct SamplingGrid {
    int patch_size = 0;
    int image_w = 0;
    int image_h = 0;
    Tensor coords;
};

SamplingGrid generate_grid(const Theta& theta, int patch_size, int image_w, int image_h);

// Bilinear interpolation of the 4 nearest pixels at each grid coordinate.
// Normalized coords map to pixels via px = (x+1)/2*(W-1); samples outside
// [0,W-1]x[0,H-1] read as zero.
Tensor bilinear_sample(const Tensor& image, const SamplingGrid& grid);

// Pixel position of the warped patch center.
std::pair<double, double> patch_center_px(const Theta& theta, int image_w, int image_h);

bool center_in_bounds(double cx, double cy, int image_w, int image_h);

// Pixel-space bounding box [x0,x1]x[y0,y1] of the warped patch extent.
struct PatchBox {
    double x0, y0, x1, y1;
};
PatchBox patch_box_px(const Theta& theta, int image_w, int image_h);

// Graph-side counterparts. The grid node carries its target image size so
// the sampler can reject mismatched images.
struct GridNode {
    Value coords;
    int patch_size = 0;
    int image_w = 0;
    int image_h = 0;
};

GridNode generate_grid_node(Graph& g, Value s, Value tx, Value ty, int patch_size, int image_w,
                            int image_h);
Value bilinear_sample_node(Graph& g, Value image, const GridNode& grid);
// [2] tensor (c_x, c_y) in pixels, differentiable in theta.
Value patch_center_node(Graph& g, Value s, Value tx, Value ty, int image_w, int image_h);

}  // namespace locrank
