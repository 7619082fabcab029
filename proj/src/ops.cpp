#include "locrank/ops.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "locrank/errors.hpp"

namespace locrank::ops {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace

double softplus_val(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) { return std::log(std::expm1(y)); }

double sigmoid_val(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

Value conv2d(Graph& g, Value input, Value weights, Value bias, int stride, int pad) {
    const Tensor& in = g.val(input);
    const Tensor& w = g.val(weights);
    const Tensor& b = g.val(bias);
    require(in.rank() == 3, "conv2d: input must be [C,H,W], got " + in.shape_str());
    require(w.rank() == 4, "conv2d: weights must be [Cout,Cin,kH,kW], got " + w.shape_str());
    require(b.rank() == 1, "conv2d: bias must be [Cout], got " + b.shape_str());
    require(stride >= 1, "conv2d: stride must be positive");
    require(pad >= 0, "conv2d: pad must be >= 0");
    const int ci = in.dim(0), h = in.dim(1), wd = in.dim(2);
    const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(1) == ci, "conv2d: weights expect " + std::to_string(w.dim(1)) +
                                " input channels, input has " + std::to_string(ci));
    require(b.dim(0) == co, "conv2d: bias has " + std::to_string(b.dim(0)) + " channels, weights " +
                                std::to_string(co));
    require(kh <= h + 2 * pad && kw <= wd + 2 * pad,
            "conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                " exceeds padded input " + std::to_string(h + 2 * pad) + "x" +
                std::to_string(wd + 2 * pad));
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;

    Tensor out({co, oh, ow});
    const double* ind = in.data.data();
    const double* wld = w.data.data();
    double* od = out.data.data();
    for (int oc = 0; oc < co; ++oc) {
        const double bv = b.at(oc);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bv;
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < ci; ++ic) {
                    const double* inc = ind + (ic * h) * wd;
                    const double* wrow = wld + ((oc * ci + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* irow = inc + iy * wd;
                        const double* wk = wrow + ky * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= wd) continue;
                            acc += irow[ix] * wk[kx];
                        }
                    }
                }
                od[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }

    return g.node(std::move(out), {input, weights, bias},
                  [=](Graph& gg, const Tensor& gout) {
                      const double* inv = gg.val(input).data.data();
                      const double* wv = gg.val(weights).data.data();
                      const double* go = gout.data.data();
                      double* gin = gg.grad_buf(input);
                      double* gw = gg.grad_buf(weights);
                      double* gb = gg.grad_buf(bias);
                      for (int oc = 0; oc < co; ++oc) {
                          for (int oy = 0; oy < oh; ++oy) {
                              for (int ox = 0; ox < ow; ++ox) {
                                  const double gv = go[(oc * oh + oy) * ow + ox];
                                  if (gb) gb[oc] += gv;
                                  if (!gin && !gw) continue;
                                  if (gv == 0.0) continue;
                                  const int iy0 = oy * stride - pad;
                                  const int ix0 = ox * stride - pad;
                                  for (int ic = 0; ic < ci; ++ic) {
                                      const double* irow = inv + (ic * h) * wd;
                                      const double* wrow = wv + ((oc * ci + ic) * kh) * kw;
                                      double* girow = gin ? gin + (ic * h) * wd : nullptr;
                                      double* gwrow = gw ? gw + ((oc * ci + ic) * kh) * kw : nullptr;
                                      for (int ky = 0; ky < kh; ++ky) {
                                          const int iy = iy0 + ky;
                                          if (iy < 0 || iy >= h) continue;
                                          for (int kx = 0; kx < kw; ++kx) {
                                              const int ix = ix0 + kx;
                                              if (ix < 0 || ix >= wd) continue;
                                              if (gwrow)
                                                  gwrow[ky * kw + kx] += gv * irow[iy * wd + ix];
                                              if (girow)
                                                  girow[iy * wd + ix] += gv * wrow[ky * kw + kx];
                                          }
                                      }
                                  }
                              }
                          }
                      }
                  });
}

Value maxpool2d(Graph& g, Value input, int k, int stride) {
    const Tensor& in = g.val(input);
    require(in.rank() == 3, "maxpool2d: input must be [C,H,W], got " + in.shape_str());
    require(k >= 1 && stride >= 1, "maxpool2d: window and stride must be positive");
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    require(k <= h && k <= w, "maxpool2d: window " + std::to_string(k) + " larger than input " +
                                  std::to_string(h) + "x" + std::to_string(w));
    const int oh = (h - k) / stride + 1;
    const int ow = (w - k) / stride + 1;

    Tensor out({c, oh, ow});
    std::vector<int> argmax(static_cast<size_t>(out.numel()));
    for (int ic = 0; ic < c; ++ic) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -1e300;
                int best_idx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const int iy = oy * stride + ky;
                        const int ix = ox * stride + kx;
                        const double v = in.at(ic, iy, ix);
                        if (v > best) {  // strict: ties keep the first row-major hit
                            best = v;
                            best_idx = (ic * h + iy) * w + ix;
                        }
                    }
                }
                out.at(ic, oy, ox) = best;
                argmax[static_cast<size_t>((ic * oh + oy) * ow + ox)] = best_idx;
            }
        }
    }

    return g.node(std::move(out), {input},
                  [input, argmax = std::move(argmax)](Graph& gg, const Tensor& gout) {
                      double* gin = gg.grad_buf(input);
                      if (!gin) return;
                      for (int i = 0; i < gout.numel(); ++i)
                          gin[argmax[static_cast<size_t>(i)]] += gout.at(i);
                  });
}

Value relu(Graph& g, Value x) {
    const Tensor& in = g.val(x);
    Tensor out(in.shape);
    for (int i = 0; i < in.numel(); ++i) out.at(i) = in.at(i) > 0 ? in.at(i) : 0.0;
    return g.node(std::move(out), {x}, [x](Graph& gg, const Tensor& gout) {
        const double* inv = gg.val(x).data.data();
        double* gx = gg.grad_buf(x);
        if (!gx) return;
        for (int i = 0; i < gout.numel(); ++i)
            if (inv[i] > 0) gx[i] += gout.at(i);
    });
}

Value linear(Graph& g, Value x, Value w, Value b) {
    const Tensor& xv = g.val(x);
    const Tensor& wv = g.val(w);
    const Tensor& bv = g.val(b);
    require(xv.rank() == 1, "linear: input must be 1-D, got " + xv.shape_str());
    require(wv.rank() == 2, "linear: weights must be [Dout,Din], got " + wv.shape_str());
    const int din = xv.dim(0), dout = wv.dim(0);
    require(wv.dim(1) == din, "linear: weights expect " + std::to_string(wv.dim(1)) +
                                  " inputs, got " + std::to_string(din));
    require(bv.rank() == 1 && bv.dim(0) == dout,
            "linear: bias " + bv.shape_str() + " does not match Dout " + std::to_string(dout));

    Tensor out({dout});
    for (int o = 0; o < dout; ++o) {
        double acc = bv.at(o);
        const double* wr = wv.data.data() + static_cast<size_t>(o * din);
        for (int i = 0; i < din; ++i) acc += wr[i] * xv.at(i);
        out.at(o) = acc;
    }
    return g.node(std::move(out), {x, w, b}, [=](Graph& gg, const Tensor& gout) {
        const double* xval = gg.val(x).data.data();
        const double* wval = gg.val(w).data.data();
        double* gx = gg.grad_buf(x);
        double* gw = gg.grad_buf(w);
        double* gb = gg.grad_buf(b);
        for (int o = 0; o < dout; ++o) {
            const double gv = gout.at(o);
            if (gb) gb[o] += gv;
            if (gv == 0.0) continue;
            const double* wr = wval + static_cast<size_t>(o * din);
            double* gwr = gw ? gw + static_cast<size_t>(o * din) : nullptr;
            if (gwr)
                for (int i = 0; i < din; ++i) gwr[i] += gv * xval[i];
            if (gx)
                for (int i = 0; i < din; ++i) gx[i] += gv * wr[i];
        }
    });
}

Value concat(Graph& g, Value a, Value b) {
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    require(av.rank() == 1 && bv.rank() == 1, "concat: both inputs must be 1-D");
    const int na = av.numel(), nb = bv.numel();
    Tensor out({na + nb});
    for (int i = 0; i < na; ++i) out.at(i) = av.at(i);
    for (int i = 0; i < nb; ++i) out.at(na + i) = bv.at(i);
    return g.node(std::move(out), {a, b}, [=](Graph& gg, const Tensor& gout) {
        for (int i = 0; i < na; ++i) gg.accum_at(a, i, gout.at(i));
        for (int i = 0; i < nb; ++i) gg.accum_at(b, i, gout.at(na + i));
    });
}

Value flatten(Graph& g, Value x) {
    const Tensor& xv = g.val(x);
    Tensor out;
    out.shape = {xv.numel()};
    out.data = xv.data;
    return g.node(std::move(out), {x}, [x](Graph& gg, const Tensor& gout) {
        for (int i = 0; i < gout.numel(); ++i) gg.accum_at(x, i, gout.at(i));
    });
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

}  // namespace

Value add(Graph& g, Value a, Value b) {
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    require_same_shape(av, bv, "add");
    Tensor out(av.shape);
    for (int i = 0; i < av.numel(); ++i) out.at(i) = av.at(i) + bv.at(i);
    return g.node(std::move(out), {a, b}, [=](Graph& gg, const Tensor& gout) {
        gg.accum(a, gout);
        gg.accum(b, gout);
    });
}

Value sub(Graph& g, Value a, Value b) {
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    require_same_shape(av, bv, "sub");
    Tensor out(av.shape);
    for (int i = 0; i < av.numel(); ++i) out.at(i) = av.at(i) - bv.at(i);
    return g.node(std::move(out), {a, b}, [=](Graph& gg, const Tensor& gout) {
        gg.accum(a, gout);
        for (int i = 0; i < gout.numel(); ++i) gg.accum_at(b, i, -gout.at(i));
    });
}

Value mul(Graph& g, Value a, Value b) {
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape);
    for (int i = 0; i < av.numel(); ++i) out.at(i) = av.at(i) * bv.at(i);
    return g.node(std::move(out), {a, b}, [=](Graph& gg, const Tensor& gout) {
        const Tensor& aval = gg.val(a);
        const Tensor& bval = gg.val(b);
        for (int i = 0; i < gout.numel(); ++i) {
            gg.accum_at(a, i, gout.at(i) * bval.at(i));
            gg.accum_at(b, i, gout.at(i) * aval.at(i));
        }
    });
}

Value scale(Graph& g, Value x, double k) {
    const Tensor& xv = g.val(x);
    Tensor out(xv.shape);
    for (int i = 0; i < xv.numel(); ++i) out.at(i) = xv.at(i) * k;
    return g.node(std::move(out), {x}, [=](Graph& gg, const Tensor& gout) {
        for (int i = 0; i < gout.numel(); ++i) gg.accum_at(x, i, gout.at(i) * k);
    });
}

Value add_scalar(Graph& g, Value x, double k) {
    const Tensor& xv = g.val(x);
    Tensor out(xv.shape);
    for (int i = 0; i < xv.numel(); ++i) out.at(i) = xv.at(i) + k;
    return g.node(std::move(out), {x},
                  [x](Graph& gg, const Tensor& gout) { gg.accum(x, gout); });
}

Value sum(Graph& g, Value x) {
    const Tensor& xv = g.val(x);
    double acc = 0.0;
    for (int i = 0; i < xv.numel(); ++i) acc += xv.at(i);
    return g.node(Tensor::scalar(acc), {x}, [x](Graph& gg, const Tensor& gout) {
        double* gx = gg.grad_buf(x);
        if (!gx) return;
        const int n = gg.val(x).numel();
        for (int i = 0; i < n; ++i) gx[i] += gout.at(0);
    });
}

Value pick(Graph& g, Value x, int index) {
    const Tensor& xv = g.val(x);
    require(index >= 0 && index < xv.numel(),
            "pick: index " + std::to_string(index) + " out of range for " + xv.shape_str());
    return g.node(Tensor::scalar(xv.at(index)), {x}, [=](Graph& gg, const Tensor& gout) {
        gg.accum_at(x, index, gout.at(0));
    });
}

Value softplus(Graph& g, Value x) {
    const Tensor& xv = g.val(x);
    Tensor out(xv.shape);
    for (int i = 0; i < xv.numel(); ++i) out.at(i) = softplus_val(xv.at(i));
    return g.node(std::move(out), {x}, [x](Graph& gg, const Tensor& gout) {
        const Tensor& inv = gg.val(x);
        for (int i = 0; i < gout.numel(); ++i)
            gg.accum_at(x, i, gout.at(i) * sigmoid_val(inv.at(i)));
    });
}

Value clamp(Graph& g, Value x, double lo, double hi) {
    const Tensor& xv = g.val(x);
    Tensor out(xv.shape);
    for (int i = 0; i < xv.numel(); ++i) {
        double v = xv.at(i);
        out.at(i) = v < lo ? lo : (v > hi ? hi : v);
    }
    // Inside the rails the gradient passes through. Outside, only the
    // component pointing back inside passes; otherwise a value pushed past
    // a rail could never recover (zero gradient forever).
    return g.node(std::move(out), {x}, [=](Graph& gg, const Tensor& gout) {
        const Tensor& inv = gg.val(x);
        for (int i = 0; i < gout.numel(); ++i) {
            const double v = inv.at(i);
            const double gv = gout.at(i);
            const bool pass = (v > lo && v < hi) || (v <= lo && gv < 0) || (v >= hi && gv > 0);
            if (pass) gg.accum_at(x, i, gv);
        }
    });
}

Value scale_grad(Graph& g, Value x, double factor) {
    const Tensor& xv = g.val(x);
    Tensor out = xv;
    return g.node(std::move(out), {x}, [=](Graph& gg, const Tensor& gout) {
        for (int i = 0; i < gout.numel(); ++i) gg.accum_at(x, i, gout.at(i) * factor);
    });
}

}  // namespace locrank::ops
