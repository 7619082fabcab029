#pragma once

#include "locrank/graph.hpp"

namespace locrank::ops {

// Valid (no implicit padding) 2-D cross-correlation. Explicit zero padding
// via `pad`. input [Cin,H,W], weights [Cout,Cin,kH,kW], bias [Cout];
// output [Cout,H',W'] with H' = (H + 2*pad - kH)/stride + 1.
Value conv2d(Graph& g, Value input, Value weights, Value bias, int stride, int pad = 0);

// Max pooling with k x k windows. Backward routes to the argmax position,
// first occurrence in row-major scan on ties.
Value maxpool2d(Graph& g, Value input, int k, int stride);

Value relu(Graph& g, Value x);

// y = W x + b with x [Din], W [Dout,Din], b [Dout].
Value linear(Graph& g, Value x, Value w, Value b);

// 1-D concatenation; backward splits the gradient at the seam.
Value concat(Graph& g, Value a, Value b);

// Reshape to 1-D, gradient passes through.
Value flatten(Graph& g, Value x);

Value add(Graph& g, Value a, Value b);
Value sub(Graph& g, Value a, Value b);
Value mul(Graph& g, Value a, Value b);
Value scale(Graph& g, Value x, double k);
Value add_scalar(Graph& g, Value x, double k);
Value sum(Graph& g, Value x);

// Single element x[index] as a scalar node.
Value pick(Graph& g, Value x, int index);

// log(1 + e^x), computed overflow-safe.
Value softplus(Graph& g, Value x);

// Clamp to [lo, hi]; gradient passes only strictly inside the rails.
Value clamp(Graph& g, Value x, double lo, double hi);

// Identity forward; multiplies the incoming gradient by `factor`. Used to
// give the scale component of theta a reduced relative learning rate.
Value scale_grad(Graph& g, Value x, double factor);

double softplus_val(double x);
double softplus_inv(double y);
double sigmoid_val(double x);

}  // namespace locrank::ops
