#include "mgbp/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mgbp/parallel.hpp"

namespace mgbp::ops {

namespace {

struct Dims5 {
    int64_t b, c, t, h, w;
};

Dims5 image_dims(const Tensor& x, const char* what) {
    if (x.ndim() != 4 && x.ndim() != 5)
        throw dimension_error(std::string(what) + " must be 4D or 5D, got " +
                              std::to_string(x.ndim()) + "D " + x.shape_str());
    return {x.batch(), x.channels(), x.time(), x.height(), x.width()};
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(what) + ": shape mismatch " + a.shape_str() +
                              " vs " + b.shape_str());
}

std::vector<int64_t> conv_out_shape(const Tensor& x, const ConvSpec& s, bool transposed) {
    const Dims5 d = image_dims(x, transposed ? "conv_transposed input" : "conv input");
    const int64_t expect_c = transposed ? s.out_channels : s.in_channels;
    if (d.c != expect_c)
        throw dimension_error(std::string("channel axis mismatch: input has ") +
                              std::to_string(d.c) + " channels, spec expects " +
                              std::to_string(expect_c));
    if (s.kt < 1 || s.kh < 1 || s.kw < 1 || s.st < 1 || s.sh < 1 || s.sw < 1 || s.pt < 0 ||
        s.ph < 0 || s.pw < 0)
        throw spec_error("kernel/stride must be >= 1 and padding >= 0");
    if (x.ndim() == 4 && (s.kt != 1 || s.st != 1 || s.pt != 0))
        throw spec_error("temporal kernel/stride/padding require a 5D tensor");

    auto extent = [&](int64_t in, int k, int st, int p, const char* axis) {
        const int64_t out = transposed ? ConvSpec::tconv_extent(in, k, st, p)
                                       : ConvSpec::conv_extent(in, k, st, p);
        if (out < 1)
            throw spec_error(std::string("non-positive output extent on ") + axis +
                             " axis: in=" + std::to_string(in) + " kernel=" + std::to_string(k) +
                             " stride=" + std::to_string(st) + " pad=" + std::to_string(p));
        return out;
    };
    const int64_t to = extent(d.t, s.kt, s.st, s.pt, "time");
    const int64_t ho = extent(d.h, s.kh, s.sh, s.ph, "height");
    const int64_t wo = extent(d.w, s.kw, s.sw, s.pw, "width");
    const int64_t co = transposed ? s.in_channels : s.out_channels;
    if (x.ndim() == 4) return {d.b, co, ho, wo};
    return {d.b, co, to, ho, wo};
}

void check_weights(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s,
                   bool transposed) {
    std::vector<int64_t> expect = (x.ndim() == 5)
        ? std::vector<int64_t>{s.out_channels, s.in_channels, s.kt, s.kh, s.kw}
        : std::vector<int64_t>{s.out_channels, s.in_channels, s.kh, s.kw};
    if (w.shape() != expect)
        throw dimension_error("weights shape " + w.shape_str() + " does not match spec " +
                              Tensor::shape_str(expect));
    const int64_t bias_len = transposed ? s.in_channels : s.out_channels;
    if (!b.empty() && (b.ndim() != 1 || b.dim(0) != bias_len))
        throw dimension_error("bias must be empty or 1D of length " + std::to_string(bias_len) +
                              ", got " + b.shape_str());
}

}  // namespace

Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s) {
    check_weights(x, w, b, s, false);
    const auto out_shape = conv_out_shape(x, s, false);
    const Dims5 d = image_dims(x, "conv input");
    Tensor y(out_shape);
    const Dims5 o = image_dims(y, "conv output");

    const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.empty() ? nullptr : b.data();
    double* yp = y.data();

    parallel_for(d.b * o.c, [&](int64_t begin, int64_t end) {
        for (int64_t bc = begin; bc < end; ++bc) {
            const int64_t bb = bc / o.c;
            const int64_t co = bc % o.c;
            const double bias = bp ? bp[co] : 0.0;
            const double* wco = wp + co * d.c * kvol;
            for (int64_t to = 0; to < o.t; ++to) {
                const int64_t t0 = to * s.st - s.pt;
                const int kt_lo = static_cast<int>(std::max<int64_t>(0, -t0));
                const int kt_hi = static_cast<int>(std::min<int64_t>(s.kt, d.t - t0));
                for (int64_t ho = 0; ho < o.h; ++ho) {
                    const int64_t h0 = ho * s.sh - s.ph;
                    const int kh_lo = static_cast<int>(std::max<int64_t>(0, -h0));
                    const int kh_hi = static_cast<int>(std::min<int64_t>(s.kh, d.h - h0));
                    double* yrow = yp + (((bb * o.c + co) * o.t + to) * o.h + ho) * o.w;
                    for (int64_t wo = 0; wo < o.w; ++wo) {
                        const int64_t w0 = wo * s.sw - s.pw;
                        const int kw_lo = static_cast<int>(std::max<int64_t>(0, -w0));
                        const int kw_hi = static_cast<int>(std::min<int64_t>(s.kw, d.w - w0));
                        double acc = bias;
                        for (int64_t ci = 0; ci < d.c; ++ci) {
                            const double* wci = wco + ci * kvol;
                            const double* xci = xp + (bb * d.c + ci) * d.t * d.h * d.w;
                            for (int kt = kt_lo; kt < kt_hi; ++kt) {
                                const double* xt = xci + (t0 + kt) * d.h * d.w;
                                const double* wt = wci + int64_t(kt) * s.kh * s.kw;
                                for (int kh = kh_lo; kh < kh_hi; ++kh) {
                                    const double* xrow = xt + (h0 + kh) * d.w + w0;
                                    const double* wrow = wt + int64_t(kh) * s.kw;
                                    for (int kw = kw_lo; kw < kw_hi; ++kw)
                                        acc += xrow[kw] * wrow[kw];
                                }
                            }
                        }
                        yrow[wo] = acc;
                    }
                }
            }
        }
    });
    return y;
}

Tensor conv_transposed(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s) {
    check_weights(x, w, b, s, true);
    const auto out_shape = conv_out_shape(x, s, true);
    const Dims5 d = image_dims(x, "conv_transposed input");
    Tensor y(out_shape);
    const Dims5 o = image_dims(y, "conv_transposed output");

    const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
    const double* xp = x.data();
    const double* wp = w.data();
    const double* bp = b.empty() ? nullptr : b.data();
    double* yp = y.data();

    // Gather form: each output element sums the input positions that would
    // have touched it in the forward conv, so writes are disjoint.
    parallel_for(d.b * o.c, [&](int64_t begin, int64_t end) {
        for (int64_t bc = begin; bc < end; ++bc) {
            const int64_t bb = bc / o.c;
            const int64_t cn = bc % o.c;  // "in_channels" side
            const double bias = bp ? bp[cn] : 0.0;
            for (int64_t tn = 0; tn < o.t; ++tn) {
                for (int64_t hn = 0; hn < o.h; ++hn) {
                    double* yrow = yp + (((bb * o.c + cn) * o.t + tn) * o.h + hn) * o.w;
                    for (int64_t wn = 0; wn < o.w; ++wn) {
                        double acc = bias;
                        for (int kt = 0; kt < s.kt; ++kt) {
                            const int64_t tm_num = tn + s.pt - kt;
                            if (tm_num < 0 || tm_num % s.st) continue;
                            const int64_t tm = tm_num / s.st;
                            if (tm >= d.t) continue;
                            for (int kh = 0; kh < s.kh; ++kh) {
                                const int64_t hm_num = hn + s.ph - kh;
                                if (hm_num < 0 || hm_num % s.sh) continue;
                                const int64_t hm = hm_num / s.sh;
                                if (hm >= d.h) continue;
                                for (int kw = 0; kw < s.kw; ++kw) {
                                    const int64_t wm_num = wn + s.pw - kw;
                                    if (wm_num < 0 || wm_num % s.sw) continue;
                                    const int64_t wm = wm_num / s.sw;
                                    if (wm >= d.w) continue;
                                    const int64_t kidx = (int64_t(kt) * s.kh + kh) * s.kw + kw;
                                    for (int64_t cm = 0; cm < d.c; ++cm) {
                                        acc += xp[(((bb * d.c + cm) * d.t + tm) * d.h + hm) * d.w +
                                                  wm] *
                                               wp[(cm * o.c + cn) * kvol + kidx];
                                    }
                                }
                            }
                        }
                        yrow[wn] = acc;
                    }
                }
            }
        }
    });
    return y;
}

Tensor conv_grad_input(const Tensor& gy, const Tensor& w, const ConvSpec& s,
                       const std::vector<int64_t>& in_shape) {
    const Dims5 d = image_dims(gy, "conv cotangent");
    if (d.c != s.out_channels)
        throw dimension_error("conv_grad_input: cotangent channel axis mismatch");
    Tensor y(in_shape);
    const Dims5 o = image_dims(y, "conv input gradient");
    if (o.c != s.in_channels)
        throw dimension_error("conv_grad_input: input shape channel axis mismatch");
    const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
    const double* gp = gy.data();
    const double* wp = w.data();
    double* yp = y.data();

    parallel_for(o.b * o.c, [&](int64_t begin, int64_t end) {
        for (int64_t bc = begin; bc < end; ++bc) {
            const int64_t bb = bc / o.c;
            const int64_t ci = bc % o.c;
            for (int64_t tn = 0; tn < o.t; ++tn) {
                for (int64_t hn = 0; hn < o.h; ++hn) {
                    double* yrow = yp + (((bb * o.c + ci) * o.t + tn) * o.h + hn) * o.w;
                    for (int64_t wn = 0; wn < o.w; ++wn) {
                        double acc = 0.0;
                        for (int kt = 0; kt < s.kt; ++kt) {
                            const int64_t tm_num = tn + s.pt - kt;
                            if (tm_num < 0 || tm_num % s.st) continue;
                            const int64_t tm = tm_num / s.st;
                            if (tm >= d.t) continue;
                            for (int kh = 0; kh < s.kh; ++kh) {
                                const int64_t hm_num = hn + s.ph - kh;
                                if (hm_num < 0 || hm_num % s.sh) continue;
                                const int64_t hm = hm_num / s.sh;
                                if (hm >= d.h) continue;
                                for (int kw = 0; kw < s.kw; ++kw) {
                                    const int64_t wm_num = wn + s.pw - kw;
                                    if (wm_num < 0 || wm_num % s.sw) continue;
                                    const int64_t wm = wm_num / s.sw;
                                    if (wm >= d.w) continue;
                                    const int64_t kidx = (int64_t(kt) * s.kh + kh) * s.kw + kw;
                                    for (int64_t co = 0; co < d.c; ++co) {
                                        acc += gp[(((bb * d.c + co) * d.t + tm) * d.h + hm) * d.w +
                                                  wm] *
                                               wp[(co * o.c + ci) * kvol + kidx];
                                    }
                                }
                            }
                        }
                        yrow[wn] = acc;
                    }
                }
            }
        }
    });
    return y;
}

Tensor conv_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& s) {
    const Dims5 d = image_dims(x, "conv input");
    const Dims5 o = image_dims(gy, "conv cotangent");
    if (d.c != s.in_channels || o.c != s.out_channels)
        throw dimension_error("conv_grad_weights: channel axes do not match spec");
    std::vector<int64_t> wshape = (x.ndim() == 5)
        ? std::vector<int64_t>{s.out_channels, s.in_channels, s.kt, s.kh, s.kw}
        : std::vector<int64_t>{s.out_channels, s.in_channels, s.kh, s.kw};
    Tensor dw(wshape);
    const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
    const double* xp = x.data();
    const double* gp = gy.data();
    double* dwp = dw.data();

    parallel_for(o.c, [&](int64_t begin, int64_t end) {
        for (int64_t co = begin; co < end; ++co) {
            double* dwc = dwp + co * d.c * kvol;
            for (int64_t bb = 0; bb < d.b; ++bb) {
                for (int64_t to = 0; to < o.t; ++to) {
                    const int64_t t0 = to * s.st - s.pt;
                    const int kt_lo = static_cast<int>(std::max<int64_t>(0, -t0));
                    const int kt_hi = static_cast<int>(std::min<int64_t>(s.kt, d.t - t0));
                    for (int64_t ho = 0; ho < o.h; ++ho) {
                        const int64_t h0 = ho * s.sh - s.ph;
                        const int kh_lo = static_cast<int>(std::max<int64_t>(0, -h0));
                        const int kh_hi = static_cast<int>(std::min<int64_t>(s.kh, d.h - h0));
                        const double* grow = gp + (((bb * o.c + co) * o.t + to) * o.h + ho) * o.w;
                        for (int64_t wo = 0; wo < o.w; ++wo) {
                            const double g = grow[wo];
                            if (g == 0.0) continue;
                            const int64_t w0 = wo * s.sw - s.pw;
                            const int kw_lo = static_cast<int>(std::max<int64_t>(0, -w0));
                            const int kw_hi = static_cast<int>(std::min<int64_t>(s.kw, d.w - w0));
                            for (int64_t ci = 0; ci < d.c; ++ci) {
                                const double* xci = xp + (bb * d.c + ci) * d.t * d.h * d.w;
                                double* dwci = dwc + ci * kvol;
                                for (int kt = kt_lo; kt < kt_hi; ++kt) {
                                    const double* xt = xci + (t0 + kt) * d.h * d.w;
                                    double* dwt = dwci + int64_t(kt) * s.kh * s.kw;
                                    for (int kh = kh_lo; kh < kh_hi; ++kh) {
                                        const double* xrow = xt + (h0 + kh) * d.w + w0;
                                        double* dwrow = dwt + int64_t(kh) * s.kw;
                                        for (int kw = kw_lo; kw < kw_hi; ++kw)
                                            dwrow[kw] += g * xrow[kw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return dw;
}

Tensor channel_sum(const Tensor& gy) {
    const Dims5 o = image_dims(gy, "bias cotangent");
    Tensor db({o.c});
    const double* gp = gy.data();
    const int64_t inner = o.t * o.h * o.w;
    for (int64_t bb = 0; bb < o.b; ++bb)
        for (int64_t c = 0; c < o.c; ++c) {
            double acc = 0.0;
            const double* base = gp + (bb * o.c + c) * inner;
            for (int64_t i = 0; i < inner; ++i) acc += base[i];
            db[c] += acc;
        }
    return db;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (int64_t i = 0; i < y.numel(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    return y;
}

Tensor relu_mask(const Tensor& x) {
    Tensor m(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) m[i] = x[i] > 0.0 ? 1.0 : 0.0;
    return m;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Dims5 da = image_dims(a, "concat lhs");
    const Dims5 db = image_dims(b, "concat rhs");
    if (a.ndim() != b.ndim())
        throw dimension_error("concat: rank mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (da.b != db.b) throw dimension_error("concat: batch axis mismatch");
    if (da.t != db.t) throw dimension_error("concat: time axis mismatch");
    if (da.h != db.h) throw dimension_error("concat: height axis mismatch");
    if (da.w != db.w) throw dimension_error("concat: width axis mismatch");
    auto shape = a.shape();
    shape[1] = da.c + db.c;
    Tensor y(shape);
    const int64_t inner = da.t * da.h * da.w;
    for (int64_t bb = 0; bb < da.b; ++bb) {
        double* dst = y.data() + bb * (da.c + db.c) * inner;
        const double* pa = a.data() + bb * da.c * inner;
        const double* pb = b.data() + bb * db.c * inner;
        std::copy(pa, pa + da.c * inner, dst);
        std::copy(pb, pb + db.c * inner, dst + da.c * inner);
    }
    return y;
}

Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1) {
    const Dims5 d = image_dims(x, "slice input");
    if (c0 < 0 || c1 > d.c || c0 >= c1)
        throw bounds_error("channel slice [" + std::to_string(c0) + ", " + std::to_string(c1) +
                           ") out of range for " + std::to_string(d.c) + " channels");
    auto shape = x.shape();
    shape[1] = c1 - c0;
    Tensor y(shape);
    const int64_t inner = d.t * d.h * d.w;
    for (int64_t bb = 0; bb < d.b; ++bb) {
        const double* src = x.data() + (bb * d.c + c0) * inner;
        std::copy(src, src + (c1 - c0) * inner, y.data() + bb * (c1 - c0) * inner);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Separable axis resampling engine: every spatial filter here (bicubic,
// Gaussian blur, shift) is a fixed linear map per axis, stored as tap lists.
// Adjoints scatter through the same tap lists, which keeps the autograd rules
// exact mirrors of the forward paths.

namespace {

struct AxisMap {
    int64_t in_n = 0, out_n = 0;
    int taps = 0;
    std::vector<int32_t> idx;  // out_n * taps, pre-clamped (replicate border)
    std::vector<double> w;     // out_n * taps
    // Difference form (out_n == in_n): out[o] = x[o] + sum_k w_k (x[idx_k] - x[o]).
    // Keeps constants exactly fixed, which gather-normalized weights cannot.
    bool diff = false;
};

double catmull_rom(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return ((1.5 * t - 2.5) * t) * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

bool power_of(int64_t v, int base) {
    while (v % base == 0) v /= base;
    return v == 1;
}

AxisMap bicubic_axis_map(int64_t in_n, int factor, ResizeDir dir) {
    if (factor < 1 || !(power_of(factor, 2) || power_of(factor, 3)))
        throw spec_error("bicubic factor must be a power of 2 or 3, got " +
                         std::to_string(factor));
    AxisMap m;
    m.in_n = in_n;
    if (dir == ResizeDir::up) {
        m.out_n = in_n * factor;
        m.taps = 4;
        m.idx.resize(static_cast<size_t>(m.out_n) * 4);
        m.w.resize(static_cast<size_t>(m.out_n) * 4);
        for (int64_t o = 0; o < m.out_n; ++o) {
            const double s = (o + 0.5) / factor - 0.5;
            const int64_t base = static_cast<int64_t>(std::floor(s));
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                const int64_t j = base - 1 + k;
                const double wk = catmull_rom(s - static_cast<double>(j));
                m.idx[static_cast<size_t>(o * 4 + k)] =
                    static_cast<int32_t>(std::clamp<int64_t>(j, 0, in_n - 1));
                m.w[static_cast<size_t>(o * 4 + k)] = wk;
                sum += wk;
            }
            for (int k = 0; k < 4; ++k) m.w[static_cast<size_t>(o * 4 + k)] /= sum;
        }
    } else {
        m.out_n = in_n / factor;
        if (m.out_n < 1)
            throw spec_error("bicubic downscale by " + std::to_string(factor) +
                             " of extent " + std::to_string(in_n) + " gives extent < 1");
        m.taps = 4 * factor + 1;
        m.idx.resize(static_cast<size_t>(m.out_n) * m.taps);
        m.w.resize(static_cast<size_t>(m.out_n) * m.taps);
        for (int64_t o = 0; o < m.out_n; ++o) {
            const double s = (o + 0.5) * factor - 0.5;
            const int64_t first = static_cast<int64_t>(std::floor(s)) - 2 * factor + 1;
            double sum = 0.0;
            for (int k = 0; k < m.taps; ++k) {
                const int64_t j = first + k;
                const double wk = catmull_rom((static_cast<double>(j) - s) / factor);
                m.idx[static_cast<size_t>(o * m.taps + k)] =
                    static_cast<int32_t>(std::clamp<int64_t>(j, 0, in_n - 1));
                m.w[static_cast<size_t>(o * m.taps + k)] = wk;
                sum += wk;
            }
            for (int k = 0; k < m.taps; ++k) m.w[static_cast<size_t>(o * m.taps + k)] /= sum;
        }
    }
    return m;
}

AxisMap gaussian_axis_map(int64_t n, int ksize, double sigma) {
    if (ksize < 1 || ksize % 2 == 0)
        throw spec_error("gaussian kernel size must be odd and positive, got " +
                         std::to_string(ksize));
    if (!(sigma > 0.0)) throw spec_error("gaussian sigma must be positive");
    AxisMap m;
    m.in_n = n;
    m.out_n = n;
    m.taps = ksize;
    const int c = ksize / 2;
    std::vector<double> g(static_cast<size_t>(ksize));
    double sum = 0.0;
    for (int k = 0; k < ksize; ++k) {
        g[static_cast<size_t>(k)] = std::exp(-0.5 * (k - c) * (k - c) / (sigma * sigma));
        sum += g[static_cast<size_t>(k)];
    }
    for (auto& v : g) v /= sum;
    m.idx.resize(static_cast<size_t>(n) * ksize);
    m.w.resize(static_cast<size_t>(n) * ksize);
    m.diff = true;
    for (int64_t i = 0; i < n; ++i)
        for (int k = 0; k < ksize; ++k) {
            m.idx[static_cast<size_t>(i * ksize + k)] =
                static_cast<int32_t>(std::clamp<int64_t>(i + k - c, 0, n - 1));
            m.w[static_cast<size_t>(i * ksize + k)] = g[static_cast<size_t>(k)];
        }
    return m;
}

AxisMap shift_axis_map(int64_t n, int delta) {
    AxisMap m;
    m.in_n = n;
    m.out_n = n;
    m.taps = 1;
    m.idx.resize(static_cast<size_t>(n));
    m.w.assign(static_cast<size_t>(n), 1.0);
    for (int64_t i = 0; i < n; ++i)
        m.idx[static_cast<size_t>(i)] = static_cast<int32_t>(std::clamp<int64_t>(i + delta, 0, n - 1));
    return m;
}

// axis_from_end: 1 = width, 2 = height.
Tensor apply_axis(const Tensor& x, const AxisMap& m, int axis_from_end) {
    const int axis = x.ndim() - axis_from_end;
    if (x.dim(axis) != m.in_n) throw dimension_error("apply_axis: extent mismatch");
    auto shape = x.shape();
    shape[static_cast<size_t>(axis)] = m.out_n;
    Tensor y(shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
    const double* xp = x.data();
    double* yp = y.data();
    for (int64_t ou = 0; ou < outer; ++ou) {
        const double* xb = xp + ou * m.in_n * inner;
        double* yb = yp + ou * m.out_n * inner;
        for (int64_t o = 0; o < m.out_n; ++o) {
            const int32_t* ids = m.idx.data() + o * m.taps;
            const double* ws = m.w.data() + o * m.taps;
            double* yrow = yb + o * inner;
            if (m.diff) {
                const double* xc = xb + o * inner;
                for (int64_t i = 0; i < inner; ++i) yrow[i] = xc[i];
                for (int k = 0; k < m.taps; ++k) {
                    const double wk = ws[k];
                    const double* xrow = xb + int64_t(ids[k]) * inner;
                    for (int64_t i = 0; i < inner; ++i) yrow[i] += wk * (xrow[i] - xc[i]);
                }
            } else {
                for (int k = 0; k < m.taps; ++k) {
                    const double wk = ws[k];
                    const double* xrow = xb + int64_t(ids[k]) * inner;
                    for (int64_t i = 0; i < inner; ++i) yrow[i] += wk * xrow[i];
                }
            }
        }
    }
    return y;
}

Tensor apply_axis_adjoint(const Tensor& g, const AxisMap& m, int axis_from_end) {
    const int axis = g.ndim() - axis_from_end;
    if (g.dim(axis) != m.out_n) throw dimension_error("apply_axis_adjoint: extent mismatch");
    auto shape = g.shape();
    shape[static_cast<size_t>(axis)] = m.in_n;
    Tensor y(shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= g.dim(i);
    for (int i = axis + 1; i < g.ndim(); ++i) inner *= g.dim(i);
    const double* gp = g.data();
    double* yp = y.data();
    for (int64_t ou = 0; ou < outer; ++ou) {
        const double* gb = gp + ou * m.out_n * inner;
        double* yb = yp + ou * m.in_n * inner;
        for (int64_t o = 0; o < m.out_n; ++o) {
            const int32_t* ids = m.idx.data() + o * m.taps;
            const double* ws = m.w.data() + o * m.taps;
            const double* grow = gb + o * inner;
            for (int k = 0; k < m.taps; ++k) {
                const double wk = ws[k];
                double* yrow = yb + int64_t(ids[k]) * inner;
                for (int64_t i = 0; i < inner; ++i) yrow[i] += wk * grow[i];
            }
            if (m.diff) {
                double row_sum = 0.0;
                for (int k = 0; k < m.taps; ++k) row_sum += ws[k];
                double* yself = yb + o * inner;
                for (int64_t i = 0; i < inner; ++i) yself[i] += (1.0 - row_sum) * grow[i];
            }
        }
    }
    return y;
}

}  // namespace

Tensor bicubic_resize(const Tensor& x, int factor, ResizeDir dir) {
    image_dims(x, "bicubic input");
    if (factor == 1) return x;
    const auto mh = bicubic_axis_map(x.height(), factor, dir);
    const auto mw = bicubic_axis_map(x.width(), factor, dir);
    return apply_axis(apply_axis(x, mh, 2), mw, 1);
}

Tensor bicubic_resize_adjoint(const Tensor& g, int factor, ResizeDir dir, int64_t in_h,
                              int64_t in_w) {
    if (factor == 1) return g;
    const auto mh = bicubic_axis_map(in_h, factor, dir);
    const auto mw = bicubic_axis_map(in_w, factor, dir);
    return apply_axis_adjoint(apply_axis_adjoint(g, mw, 1), mh, 2);
}

Tensor gaussian_blur(const Tensor& x, int ksize, double sigma) {
    image_dims(x, "blur input");
    const auto mh = gaussian_axis_map(x.height(), ksize, sigma);
    const auto mw = gaussian_axis_map(x.width(), ksize, sigma);
    return apply_axis(apply_axis(x, mh, 2), mw, 1);
}

Tensor gaussian_blur_adjoint(const Tensor& g, int ksize, double sigma) {
    const auto mh = gaussian_axis_map(g.height(), ksize, sigma);
    const auto mw = gaussian_axis_map(g.width(), ksize, sigma);
    return apply_axis_adjoint(apply_axis_adjoint(g, mw, 1), mh, 2);
}

Tensor shift2d(const Tensor& x, int dy, int dx) {
    image_dims(x, "shift input");
    return apply_axis(apply_axis(x, shift_axis_map(x.height(), dy), 2),
                      shift_axis_map(x.width(), dx), 1);
}

Tensor shift2d_adjoint(const Tensor& g, int dy, int dx) {
    return apply_axis_adjoint(apply_axis_adjoint(g, shift_axis_map(g.width(), dx), 1),
                              shift_axis_map(g.height(), dy), 2);
}

Tensor crop_time(const Tensor& x, int64_t t_out) {
    if (x.ndim() != 5) throw dimension_error("crop_time requires a 5D tensor");
    const Dims5 d = image_dims(x, "crop_time input");
    if (t_out == d.t) return x;
    if (t_out > d.t || (d.t - t_out) % 2 != 0)
        throw dimension_error("crop_time: cannot center-crop time axis " + std::to_string(d.t) +
                              " -> " + std::to_string(t_out));
    const int64_t lo = (d.t - t_out) / 2;
    Tensor y({d.b, d.c, t_out, d.h, d.w});
    const int64_t slab = d.h * d.w;
    for (int64_t bc = 0; bc < d.b * d.c; ++bc)
        for (int64_t t = 0; t < t_out; ++t) {
            const double* src = x.data() + (bc * d.t + lo + t) * slab;
            std::copy(src, src + slab, y.data() + (bc * t_out + t) * slab);
        }
    return y;
}

Tensor crop_time_adjoint(const Tensor& g, int64_t t_in) {
    if (g.ndim() != 5) throw dimension_error("crop_time_adjoint requires a 5D tensor");
    const Dims5 d = image_dims(g, "crop_time cotangent");
    if (t_in == d.t) return g;
    const int64_t lo = (t_in - d.t) / 2;
    Tensor y({d.b, d.c, t_in, d.h, d.w});
    const int64_t slab = d.h * d.w;
    for (int64_t bc = 0; bc < d.b * d.c; ++bc)
        for (int64_t t = 0; t < d.t; ++t) {
            const double* src = g.data() + (bc * d.t + t) * slab;
            std::copy(src, src + slab, y.data() + (bc * t_in + lo + t) * slab);
        }
    return y;
}

Tensor crop_spatial(const Tensor& x, int64_t t0, int64_t te, int64_t y0, int64_t ye, int64_t x0,
                    int64_t xe) {
    const Dims5 d = image_dims(x, "crop input");
    if (t0 < 0 || te > d.t || y0 < 0 || ye > d.h || x0 < 0 || xe > d.w || t0 >= te || y0 >= ye ||
        x0 >= xe)
        throw bounds_error("crop window out of range");
    auto shape = x.shape();
    if (x.ndim() == 5) shape[2] = te - t0;
    shape[static_cast<size_t>(x.ndim() - 2)] = ye - y0;
    shape[static_cast<size_t>(x.ndim() - 1)] = xe - x0;
    Tensor y(shape);
    for (int64_t bc = 0; bc < d.b * d.c; ++bc)
        for (int64_t t = t0; t < te; ++t)
            for (int64_t h = y0; h < ye; ++h) {
                const double* src = x.data() + ((bc * d.t + t) * d.h + h) * d.w + x0;
                double* dst = y.data() +
                              ((bc * (te - t0) + (t - t0)) * (ye - y0) + (h - y0)) * (xe - x0);
                std::copy(src, src + (xe - x0), dst);
            }
    return y;
}

#define MGBP_EW_BINOP(name, expr)                                    \
    Tensor name(const Tensor& a, const Tensor& b) {                  \
        check_same_shape(a, b, #name);                               \
        Tensor y(a.shape());                                         \
        for (int64_t i = 0; i < a.numel(); ++i) y[i] = (expr);       \
        return y;                                                    \
    }

MGBP_EW_BINOP(add, a[i] + b[i])
MGBP_EW_BINOP(sub, a[i] - b[i])
MGBP_EW_BINOP(mul, a[i] * b[i])
MGBP_EW_BINOP(divide, a[i] / b[i])
#undef MGBP_EW_BINOP

Tensor add_scalar(const Tensor& a, double s) {
    Tensor y = a;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += s;
    return y;
}

Tensor mul_scalar(const Tensor& a, double s) {
    Tensor y = a;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= s;
    return y;
}

Tensor abs(const Tensor& a) {
    Tensor y = a;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::fabs(y[i]);
    return y;
}

Tensor sign(const Tensor& a) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
    return y;
}

Tensor sqrt_clamp0(const Tensor& a) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] > 0.0 ? std::sqrt(a[i]) : 0.0;
    return y;
}

Tensor softplus(const Tensor& a) {
    Tensor y(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double v = a[i];
        y[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    }
    return y;
}

Tensor sum_all(const Tensor& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
    return Tensor::scalar(acc);
}

Tensor mean_all(const Tensor& a) {
    return Tensor::scalar(sum_all(a)[0] / static_cast<double>(a.numel()));
}

Tensor mean_per_item(const Tensor& a) {
    const int64_t b = a.dim(0);
    const int64_t inner = a.numel() / b;
    Tensor y({b});
    for (int64_t i = 0; i < b; ++i) {
        double acc = 0.0;
        const double* p = a.data() + i * inner;
        for (int64_t j = 0; j < inner; ++j) acc += p[j];
        y[i] = acc / static_cast<double>(inner);
    }
    return y;
}

double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace mgbp::ops
