#include "crvos/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crvos/errors.hpp"

namespace crvos::nn {

namespace {

void accumulate(const Var& p, const Tensor& g) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    p->grad.add_scaled(g, 1.0);
}

Var make_op(Tensor value, const char* op, std::vector<Var> parents) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->scope = current_scope();
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) n->parents = std::move(parents);
    return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, int k, int stride, int pad) {
    const int in_c = x.c(), in_h = x.h(), in_w = x.w();
    const int out_c = w.c();
    if (w.h() != in_c || w.w() != k * k)
        throw ShapeError("conv2d: weight shape " + w.shape_str() + " does not match input " +
                         x.shape_str());
    const int out_h = (in_h + 2 * pad - k) / stride + 1;
    const int out_w = (in_w + 2 * pad - k) / stride + 1;
    Tensor y(out_c, out_h, out_w);
    for (int oc = 0; oc < out_c; ++oc) {
        const double bias = b.data()[oc];
        for (int oy = 0; oy < out_h; ++oy) {
            double* yrow = y.row(oc, oy);
            for (int ox = 0; ox < out_w; ++ox) yrow[ox] = bias;
            for (int ic = 0; ic < in_c; ++ic) {
                const double* wk = w.row(oc, ic);
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= in_h) continue;
                    const double* xrow = x.row(ic, iy);
                    const double* wrow = wk + ky * k;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix0 = ox * stride - pad;
                        double acc = 0.0;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            acc += xrow[ix] * wrow[kx];
                        }
                        yrow[ox] += acc;
                    }
                }
            }
        }
    }
    return y;
}

void conv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, int k, int stride, int pad,
                Tensor* gx, Tensor* gw, Tensor* gb) {
    const int in_c = x.c(), in_h = x.h(), in_w = x.w();
    const int out_c = gout.c(), out_h = gout.h(), out_w = gout.w();
    for (int oc = 0; oc < out_c; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            const double* grow = gout.row(oc, oy);
            if (gb) {
                double s = 0.0;
                for (int ox = 0; ox < out_w; ++ox) s += grow[ox];
                gb->data()[oc] += s;
            }
            for (int ic = 0; ic < in_c; ++ic) {
                const double* wk = w.row(oc, ic);
                double* gwk = gw ? gw->row(oc, ic) : nullptr;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= in_h) continue;
                    const double* xrow = x.row(ic, iy);
                    double* gxrow = gx ? gx->row(ic, iy) : nullptr;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const double g = grow[ox];
                        if (g == 0.0) continue;
                        const int ix0 = ox * stride - pad;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            if (gxrow) gxrow[ix] += g * wk[ky * k + kx];
                            if (gwk) gwk[ky * k + kx] += g * xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

Var conv2d(const Var& x, const Var& w, const Var& b, int k, int stride, int pad) {
    Tensor y = conv2d_fwd(x->value, w->value, b->value, k, stride, pad);
    Var out = make_op(std::move(y), "conv2d", {x, w, b});
    if (out->requires_grad) {
        Var xv = x, wv = w, bv = b;
        out->backprop = [xv, wv, bv, k, stride, pad](Node& self) {
            Tensor gx, gw, gb;
            Tensor* pgx = nullptr;
            Tensor* pgw = nullptr;
            Tensor* pgb = nullptr;
            if (xv->requires_grad) {
                gx = Tensor(xv->value.c(), xv->value.h(), xv->value.w());
                pgx = &gx;
            }
            if (wv->requires_grad) {
                gw = Tensor(wv->value.c(), wv->value.h(), wv->value.w());
                pgw = &gw;
            }
            if (bv->requires_grad) {
                gb = Tensor(bv->value.c(), 1, 1);
                pgb = &gb;
            }
            conv2d_bwd(xv->value, wv->value, self.grad, k, stride, pad, pgx, pgw, pgb);
            if (pgx) accumulate(xv, gx);
            if (pgw) accumulate(wv, gw);
            if (pgb) accumulate(bv, gb);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// deconv2d (4x4, stride 2, pad 1)
// ---------------------------------------------------------------------------

Tensor deconv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b) {
    const int in_c = x.c(), in_h = x.h(), in_w = x.w();
    const int out_c = w.h();
    if (w.c() != in_c || w.w() != 16)
        throw ShapeError("deconv2d: weight shape " + w.shape_str() + " does not match input " +
                         x.shape_str());
    const int out_h = in_h * 2, out_w = in_w * 2;
    Tensor y(out_c, out_h, out_w);
    for (int oc = 0; oc < out_c; ++oc) {
        double* plane = y.channel(oc);
        const double bias = b.data()[oc];
        for (size_t i = 0; i < y.plane(); ++i) plane[i] = bias;
    }
    for (int ic = 0; ic < in_c; ++ic) {
        for (int oc = 0; oc < out_c; ++oc) {
            const double* wk = w.row(ic, oc);
            for (int iy = 0; iy < in_h; ++iy) {
                const double* xrow = x.row(ic, iy);
                for (int ky = 0; ky < 4; ++ky) {
                    const int oy = iy * 2 + ky - 1;
                    if (oy < 0 || oy >= out_h) continue;
                    double* yrow = y.row(oc, oy);
                    const double* wrow = wk + ky * 4;
                    for (int ix = 0; ix < in_w; ++ix) {
                        const double v = xrow[ix];
                        if (v == 0.0) continue;
                        const int ox0 = ix * 2 - 1;
                        for (int kx = 0; kx < 4; ++kx) {
                            const int ox = ox0 + kx;
                            if (ox < 0 || ox >= out_w) continue;
                            yrow[ox] += v * wrow[kx];
                        }
                    }
                }
            }
        }
    }
    return y;
}

void deconv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout,
                  Tensor* gx, Tensor* gw, Tensor* gb) {
    const int in_c = x.c(), in_h = x.h(), in_w = x.w();
    const int out_c = gout.c(), out_h = gout.h(), out_w = gout.w();
    if (gb) {
        for (int oc = 0; oc < out_c; ++oc) {
            const double* plane = gout.channel(oc);
            double s = 0.0;
            for (size_t i = 0; i < gout.plane(); ++i) s += plane[i];
            gb->data()[oc] += s;
        }
    }
    for (int ic = 0; ic < in_c; ++ic) {
        for (int oc = 0; oc < out_c; ++oc) {
            const double* wk = w.row(ic, oc);
            double* gwk = gw ? gw->row(ic, oc) : nullptr;
            for (int iy = 0; iy < in_h; ++iy) {
                const double* xrow = x.row(ic, iy);
                double* gxrow = gx ? gx->row(ic, iy) : nullptr;
                for (int ky = 0; ky < 4; ++ky) {
                    const int oy = iy * 2 + ky - 1;
                    if (oy < 0 || oy >= out_h) continue;
                    const double* grow = gout.row(oc, oy);
                    for (int ix = 0; ix < in_w; ++ix) {
                        const int ox0 = ix * 2 - 1;
                        for (int kx = 0; kx < 4; ++kx) {
                            const int ox = ox0 + kx;
                            if (ox < 0 || ox >= out_w) continue;
                            const double g = grow[ox];
                            if (gxrow) gxrow[ix] += g * wk[ky * 4 + kx];
                            if (gwk) gwk[ky * 4 + kx] += g * xrow[ix];
                        }
                    }
                }
            }
        }
    }
}

Var deconv2d(const Var& x, const Var& w, const Var& b) {
    Tensor y = deconv2d_fwd(x->value, w->value, b->value);
    Var out = make_op(std::move(y), "deconv2d", {x, w, b});
    if (out->requires_grad) {
        Var xv = x, wv = w, bv = b;
        out->backprop = [xv, wv, bv](Node& self) {
            Tensor gx, gw, gb;
            Tensor* pgx = nullptr;
            Tensor* pgw = nullptr;
            Tensor* pgb = nullptr;
            if (xv->requires_grad) {
                gx = Tensor(xv->value.c(), xv->value.h(), xv->value.w());
                pgx = &gx;
            }
            if (wv->requires_grad) {
                gw = Tensor(wv->value.c(), wv->value.h(), wv->value.w());
                pgw = &gw;
            }
            if (bv->requires_grad) {
                gb = Tensor(bv->value.c(), 1, 1);
                pgb = &gb;
            }
            deconv2d_bwd(xv->value, wv->value, self.grad, pgx, pgw, pgb);
            if (pgx) accumulate(xv, gx);
            if (pgw) accumulate(wv, gw);
            if (pgb) accumulate(bv, gb);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

Tensor relu_fwd(const Tensor& x) {
    Tensor y = x;
    double* d = y.data();
    for (size_t i = 0; i < y.size(); ++i)
        if (d[i] < 0.0) d[i] = 0.0;
    return y;
}

Var relu(const Var& x) {
    Var out = make_op(relu_fwd(x->value), "relu", {x});
    if (out->requires_grad) {
        Var xv = x;
        out->backprop = [xv](Node& self) {
            Tensor gx(xv->value.c(), xv->value.h(), xv->value.w());
            const double* xd = xv->value.data();
            const double* gd = self.grad.data();
            double* o = gx.data();
            for (size_t i = 0; i < gx.size(); ++i) o[i] = xd[i] > 0.0 ? gd[i] : 0.0;
            accumulate(xv, gx);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// bilinear upsample (integer factor, half-pixel centers)
// ---------------------------------------------------------------------------

namespace {

struct LinTap {
    int i0, i1;
    double f;  // weight of i1
};

std::vector<LinTap> bilinear_taps(int out_n, int in_n, int factor) {
    std::vector<LinTap> taps(out_n);
    for (int d = 0; d < out_n; ++d) {
        double s = (d + 0.5) / factor - 0.5;
        if (s < 0.0) s = 0.0;
        if (s > in_n - 1) s = in_n - 1;
        int i0 = static_cast<int>(std::floor(s));
        if (i0 > in_n - 2) i0 = std::max(0, in_n - 2);
        const double f = (in_n == 1) ? 0.0 : s - i0;
        taps[d] = {i0, std::min(i0 + 1, in_n - 1), f};
    }
    return taps;
}

}  // namespace

Tensor upsample_bilinear_fwd(const Tensor& x, int factor) {
    const int out_h = x.h() * factor, out_w = x.w() * factor;
    const auto ty = bilinear_taps(out_h, x.h(), factor);
    const auto tx = bilinear_taps(out_w, x.w(), factor);
    Tensor y(x.c(), out_h, out_w);
    for (int c = 0; c < x.c(); ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
            const double* r0 = x.row(c, ty[oy].i0);
            const double* r1 = x.row(c, ty[oy].i1);
            const double fy = ty[oy].f;
            double* yrow = y.row(c, oy);
            for (int ox = 0; ox < out_w; ++ox) {
                const auto& t = tx[ox];
                const double top = r0[t.i0] + t.f * (r0[t.i1] - r0[t.i0]);
                const double bot = r1[t.i0] + t.f * (r1[t.i1] - r1[t.i0]);
                yrow[ox] = top + fy * (bot - top);
            }
        }
    }
    return y;
}

void upsample_bilinear_bwd(const Tensor& gout, int factor, Tensor* gx) {
    const int in_h = gx->h(), in_w = gx->w();
    const auto ty = bilinear_taps(gout.h(), in_h, factor);
    const auto tx = bilinear_taps(gout.w(), in_w, factor);
    for (int c = 0; c < gout.c(); ++c) {
        for (int oy = 0; oy < gout.h(); ++oy) {
            const double fy = ty[oy].f;
            double* g0 = gx->row(c, ty[oy].i0);
            double* g1 = gx->row(c, ty[oy].i1);
            const double* grow = gout.row(c, oy);
            for (int ox = 0; ox < gout.w(); ++ox) {
                const auto& t = tx[ox];
                const double g = grow[ox];
                g0[t.i0] += g * (1.0 - fy) * (1.0 - t.f);
                g0[t.i1] += g * (1.0 - fy) * t.f;
                g1[t.i0] += g * fy * (1.0 - t.f);
                g1[t.i1] += g * fy * t.f;
            }
        }
    }
}

Var upsample_bilinear(const Var& x, int factor) {
    Var out = make_op(upsample_bilinear_fwd(x->value, factor), "bilinear_up", {x});
    if (out->requires_grad) {
        Var xv = x;
        out->backprop = [xv, factor](Node& self) {
            Tensor gx(xv->value.c(), xv->value.h(), xv->value.w());
            upsample_bilinear_bwd(self.grad, factor, &gx);
            accumulate(xv, gx);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// avgpool (block mean)
// ---------------------------------------------------------------------------

Tensor avgpool_fwd(const Tensor& x, int k) {
    if (x.h() % k != 0 || x.w() % k != 0)
        throw ShapeError("avgpool: input " + x.shape_str() + " not divisible by " +
                         std::to_string(k));
    const int oh = x.h() / k, ow = x.w() / k;
    const double inv = 1.0 / (static_cast<double>(k) * k);
    Tensor y(x.c(), oh, ow);
    for (int c = 0; c < x.c(); ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            double* yrow = y.row(c, oy);
            for (int ky = 0; ky < k; ++ky) {
                const double* xrow = x.row(c, oy * k + ky);
                for (int ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    const double* px = xrow + ox * k;
                    for (int kx = 0; kx < k; ++kx) s += px[kx];
                    yrow[ox] += s;
                }
            }
            for (int ox = 0; ox < ow; ++ox) yrow[ox] *= inv;
        }
    }
    return y;
}

void avgpool_bwd(const Tensor& gout, int k, Tensor* gx) {
    const double inv = 1.0 / (static_cast<double>(k) * k);
    for (int c = 0; c < gout.c(); ++c) {
        for (int oy = 0; oy < gout.h(); ++oy) {
            const double* grow = gout.row(c, oy);
            for (int ky = 0; ky < k; ++ky) {
                double* xrow = gx->row(c, oy * k + ky);
                for (int ox = 0; ox < gout.w(); ++ox) {
                    const double g = grow[ox] * inv;
                    double* px = xrow + ox * k;
                    for (int kx = 0; kx < k; ++kx) px[kx] += g;
                }
            }
        }
    }
}

Var avgpool(const Var& x, int k) {
    Var out = make_op(avgpool_fwd(x->value, k), "avgpool", {x});
    if (out->requires_grad) {
        Var xv = x;
        out->backprop = [xv, k](Node& self) {
            Tensor gx(xv->value.c(), xv->value.h(), xv->value.w());
            avgpool_bwd(self.grad, k, &gx);
            accumulate(xv, gx);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// concat / add / scale
// ---------------------------------------------------------------------------

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
    int c = 0;
    const int h = xs[0]->value.h(), w = xs[0]->value.w();
    for (const auto& x : xs) {
        if (x->value.h() != h || x->value.w() != w)
            throw ShapeError("concat_channels: spatial mismatch " + x->value.shape_str());
        c += x->value.c();
    }
    Tensor y(c, h, w);
    int off = 0;
    for (const auto& x : xs) {
        std::copy(x->value.data(), x->value.data() + x->value.size(), y.channel(off));
        off += x->value.c();
    }
    Var out = make_op(std::move(y), "concat", xs);
    if (out->requires_grad) {
        std::vector<Var> parents = xs;
        out->backprop = [parents](Node& self) {
            int off = 0;
            for (const auto& p : parents) {
                const int pc = p->value.c();
                if (p->requires_grad) {
                    Tensor g(pc, p->value.h(), p->value.w());
                    std::copy(self.grad.channel(off), self.grad.channel(off) + g.size(), g.data());
                    accumulate(p, g);
                }
                off += pc;
            }
        };
    }
    return out;
}

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeError("add: shape mismatch " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
    Tensor y = a->value;
    y.add_scaled(b->value, 1.0);
    Var out = make_op(std::move(y), "add", {a, b});
    if (out->requires_grad) {
        Var av = a, bv = b;
        out->backprop = [av, bv](Node& self) {
            accumulate(av, self.grad);
            accumulate(bv, self.grad);
        };
    }
    return out;
}

Var scale(const Var& x, double s) {
    Tensor y = x->value;
    double* d = y.data();
    for (size_t i = 0; i < y.size(); ++i) d[i] *= s;
    Var out = make_op(std::move(y), "scale", {x});
    if (out->requires_grad) {
        Var xv = x;
        out->backprop = [xv, s](Node& self) {
            Tensor g = self.grad;
            double* d = g.data();
            for (size_t i = 0; i < g.size(); ++i) d[i] *= s;
            accumulate(xv, g);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax over channels
// ---------------------------------------------------------------------------

Tensor softmax_channels_fwd(const Tensor& x) {
    Tensor y(x.c(), x.h(), x.w());
    const size_t plane = x.plane();
    for (size_t i = 0; i < plane; ++i) {
        double m = x.data()[i];
        for (int c = 1; c < x.c(); ++c) m = std::max(m, x.data()[c * plane + i]);
        double z = 0.0;
        for (int c = 0; c < x.c(); ++c) {
            const double e = std::exp(x.data()[c * plane + i] - m);
            y.data()[c * plane + i] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int c = 0; c < x.c(); ++c) y.data()[c * plane + i] *= inv;
    }
    return y;
}

Var softmax_channels(const Var& x) {
    Var out = make_op(softmax_channels_fwd(x->value), "softmax", {x});
    if (out->requires_grad) {
        Var xv = x;
        out->backprop = [xv](Node& self) {
            const Tensor& y = self.value;
            const size_t plane = y.plane();
            Tensor gx(y.c(), y.h(), y.w());
            for (size_t i = 0; i < plane; ++i) {
                double dot = 0.0;
                for (int c = 0; c < y.c(); ++c)
                    dot += self.grad.data()[c * plane + i] * y.data()[c * plane + i];
                for (int c = 0; c < y.c(); ++c) {
                    const double yc = y.data()[c * plane + i];
                    gx.data()[c * plane + i] = yc * (self.grad.data()[c * plane + i] - dot);
                }
            }
            accumulate(xv, gx);
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// NLL loss
// ---------------------------------------------------------------------------

Var nll_loss_graph(const Var& pred, const MaskMap& target, double eps) {
    const Tensor& p = pred->value;
    if (p.c() != 2 || p.h() != target.h || p.w() != target.w)
        throw ShapeError("nll_loss: pred " + p.shape_str() + " vs target (" +
                         std::to_string(target.h) + "," + std::to_string(target.w) + ")");
    for (size_t i = 0; i < p.size(); ++i)
        if (!std::isfinite(p.data()[i])) throw NumericError("nll_loss: non-finite prediction");
    const size_t n = target.size();
    double acc = 0.0;
    for (int y = 0; y < target.h; ++y) {
        for (int x = 0; x < target.w; ++x) {
            const int ch = target.at(y, x) != 0 ? 0 : 1;
            acc += -std::log(std::max(p.at(ch, y, x), eps));
        }
    }
    Tensor lv(1, 1, 1);
    lv.data()[0] = acc / static_cast<double>(n);
    Var out = make_op(std::move(lv), "nll", {pred});
    if (out->requires_grad) {
        Var pv = pred;
        MaskMap t = target;
        out->backprop = [pv, t, eps, n](Node& self) {
            const double g = self.grad.data()[0] / static_cast<double>(n);
            Tensor gp(pv->value.c(), pv->value.h(), pv->value.w());
            for (int y = 0; y < t.h; ++y) {
                for (int x = 0; x < t.w; ++x) {
                    const int ch = t.at(y, x) != 0 ? 0 : 1;
                    const double v = pv->value.at(ch, y, x);
                    if (v > eps) gp.at(ch, y, x) = -g / v;
                }
            }
            accumulate(pv, gp);
        };
    }
    return out;
}

}  // namespace crvos::nn
