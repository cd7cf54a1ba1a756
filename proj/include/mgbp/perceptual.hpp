#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgbp/exec.hpp"
#include "mgbp/ops.hpp"
#include "mgbp/tensor.hpp"

namespace mgbp::perceptual {

// Downscale pyramid used by the multi-resolution losses: doubling factors up
// to the upscaling factor, with the factor itself always included (so f=3
// gives {2,3}).
std::vector<int> pyramid_factors(int factor);

// One pyramid input per discriminator scale: the full-resolution image plus
// the doubling downscales, matching the real/fake sets {X, S2(X), S4(X), ...}.
int discriminator_scales(int factor);

struct VnscConfig {
    int kernel = 7;
    double sigma = 1.17;
    int range = 3;  // shift correlator range; (2*range+1)^2 output channels

    int out_channels() const { return (2 * range + 1) * (2 * range + 1); }
};

struct LossWeights {
    double gan = 0.001;
    double cycle = 10.0;
    double cx = 0.1;
    double l1 = 10.0;

    void validate() const {
        if (gan < 0 || cycle < 0 || cx < 0 || l1 < 0)
            throw config_error("loss weights must be >= 0");
    }
};

// Normalized 2D Gaussian window (ksize x ksize), row-major.
std::vector<double> gaussian_window(int ksize, double sigma);

Tensor luminance_weights();  // 1x3x1x1 BT.609 coefficients

template <class Ctx>
typename Ctx::H luminance_bt609_t(Ctx& ctx, const typename Ctx::H& rgb) {
    if (ctx.channels(rgb) != 3)
        throw dimension_error("luminance: channel axis must be 3, got " +
                              std::to_string(ctx.channels(rgb)));
    ops::ConvSpec s;
    s.in_channels = 3;
    s.out_channels = 1;
    return ctx.conv_const(rgb, luminance_weights(), s);
}

// Variance normalization (I - mu) / (sigma + 1) with local Gaussian moments.
// Written in shifted-difference form (mu = I + sum_k w_k (I_k - I)), which is
// algebraically the Gaussian-filtered mean/variance but makes a constant
// image map to exact zeros.
template <class Ctx>
typename Ctx::H variance_normalize_t(Ctx& ctx, const typename Ctx::H& lum,
                                     const VnscConfig& cfg) {
    using H = typename Ctx::H;
    if (ctx.channels(lum) != 1)
        throw dimension_error("variance_normalize expects a single luminance channel");
    if (cfg.kernel == 1) return ctx.mul_scalar(lum, 0.0);
    const int r = cfg.kernel / 2;
    const auto w2d = gaussian_window(cfg.kernel, cfg.sigma);
    H s1, s2;
    bool first = true;
    for (int p = -r; p <= r; ++p) {
        for (int q = -r; q <= r; ++q) {
            if (p == 0 && q == 0) continue;  // zero difference
            const double wk = w2d[static_cast<size_t>((p + r) * cfg.kernel + (q + r))];
            const H d = ctx.sub(ctx.shift2d(lum, p, q), lum);
            const H wd = ctx.mul_scalar(d, wk);
            const H wd2 = ctx.mul_scalar(ctx.mul(d, d), wk);
            s1 = first ? wd : ctx.add(s1, wd);
            s2 = first ? wd2 : ctx.add(s2, wd2);
            first = false;
        }
    }
    const H var = ctx.sub(s2, ctx.mul(s1, s1));
    const H sigma = ctx.sqrt_clamp0(var);
    return ctx.divide(ctx.mul_scalar(s1, -1.0), ctx.add_scalar(sigma, 1.0));
}

// Variance normalization + shift correlator: channel 7(p+3)+q+3 holds
// I^_{i,j} * I^_{i+p,j+q} (replicate borders).
template <class Ctx>
typename Ctx::H vnsc_t(Ctx& ctx, const typename Ctx::H& rgb, const VnscConfig& cfg) {
    using H = typename Ctx::H;
    const H ih = variance_normalize_t(ctx, luminance_bt609_t(ctx, rgb), cfg);
    H out;
    bool first = true;
    for (int p = -cfg.range; p <= cfg.range; ++p) {
        for (int q = -cfg.range; q <= cfg.range; ++q) {
            const H prod = ctx.mul(ih, ctx.shift2d(ih, p, q));
            out = first ? prod : ctx.concat(out, prod);
            first = false;
        }
    }
    return out;
}

Tensor luminance_bt609(const Tensor& rgb);
Tensor variance_normalize(const Tensor& lum, const VnscConfig& cfg = {});
Tensor vnsc(const Tensor& rgb, const VnscConfig& cfg = {});

// Multiscale discriminator: one VN+SC layer per input scale, 4-layer CNN
// blocks (3x3, stride 1 except the last layer of each block at stride 2, no
// parameter sharing), lower scales joining by concatenation after each
// stride-2 stage, and a 1x1 scalar head averaged over space.
struct DiscConfig {
    int scales = 3;
    int width = 64;
    int image_channels = 3;
    VnscConfig vnsc;

    static DiscConfig for_factor(int factor);
    void validate() const;
    std::string canonical() const;
};

class DiscriminatorGraph {
public:
    struct Layer {
        std::string name;
        ops::ConvSpec spec;
    };

    // Blocks get fan-in-scaled uniform weights; the scalar head starts at
    // zero so untrained scores are exactly 0.
    static DiscriminatorGraph build(const DiscConfig& cfg, uint64_t init_seed);

    const DiscConfig& config() const { return cfg_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    int64_t parameter_count() const;

    template <class Ctx>
    typename Ctx::H run(Ctx& ctx, const std::vector<typename Ctx::H>& scales) const {
        using H = typename Ctx::H;
        if (static_cast<int>(scales.size()) != cfg_.scales)
            throw dimension_error("discriminator expects " + std::to_string(cfg_.scales) +
                                  " scales, got " + std::to_string(scales.size()));
        for (int i = 1; i < cfg_.scales; ++i) {
            if (ctx.height(scales[size_t(i)]) * 2 != ctx.height(scales[size_t(i - 1)]) ||
                ctx.width(scales[size_t(i)]) * 2 != ctx.width(scales[size_t(i - 1)]))
                throw dimension_error("discriminator scale " + std::to_string(i) +
                                      " is not half the extent of scale " + std::to_string(i - 1));
        }
        H feat;
        size_t layer = 0;
        for (int b = 0; b < cfg_.scales; ++b) {
            const H v = vnsc_t(ctx, scales[static_cast<size_t>(b)], cfg_.vnsc);
            H cur = (b == 0) ? v : ctx.concat(feat, v);
            for (int l = 0; l < 4; ++l, ++layer)
                cur = ctx.relu(ctx.conv_named(cur, layers_[layer].name, layers_[layer].spec));
            feat = cur;
        }
        return ctx.mean_per_item(ctx.conv_named(feat, layers_.back().name, layers_.back().spec));
    }

    // Per-item pre-sigmoid scores, shape (batch).
    Tensor forward(const std::vector<Tensor>& scales) const;

private:
    DiscConfig cfg_;
    std::vector<Layer> layers_;  // blocks in order, then the head last
    std::map<std::string, Tensor> params_;
};

// Full-resolution image plus doubling bicubic downscales, sized for the
// discriminator input set.
template <class Ctx>
std::vector<typename Ctx::H> multiscale_pyramid(Ctx& ctx, const typename Ctx::H& x, int scales) {
    std::vector<typename Ctx::H> out{x};
    for (int i = 1; i < scales; ++i)
        out.push_back(ctx.bicubic(x, 1 << i, ops::ResizeDir::down));
    return out;
}

// Relativistic GAN losses from paired pre-sigmoid scores:
//   L_D = -E[log sigmoid(C(R) - C(F))],  L_G = -E[log sigmoid(C(F) - C(R))],
// evaluated in softplus form so scores up to ~1e4 stay finite.
template <class Ctx>
std::pair<typename Ctx::H, typename Ctx::H> rsgan_losses_t(Ctx& ctx,
                                                           const typename Ctx::H& c_real,
                                                           const typename Ctx::H& c_fake) {
    const auto diff = ctx.sub(c_real, c_fake);
    auto l_d = ctx.mean_all(ctx.softplus(ctx.mul_scalar(diff, -1.0)));
    auto l_g = ctx.mean_all(ctx.softplus(diff));
    return {l_d, l_g};
}

struct RsganLosses {
    double d = 0.0, g = 0.0;
};
RsganLosses rsgan_losses(const Tensor& c_real, const Tensor& c_fake);

template <class Ctx>
typename Ctx::H l1_t(Ctx& ctx, const typename Ctx::H& a, const typename Ctx::H& b) {
    return ctx.mean_all(ctx.abs(ctx.sub(a, b)));
}

// L1(Y_{W=0}, X) + sum over the factor pyramid of L1(S_k(Y), S_k(X)).
template <class Ctx>
typename Ctx::H high_fidelity_loss_t(Ctx& ctx, const typename Ctx::H& y0,
                                     const typename Ctx::H& x, int factor) {
    auto loss = l1_t(ctx, y0, x);
    for (int k : pyramid_factors(factor))
        loss = ctx.add(loss, l1_t(ctx, ctx.bicubic(y0, k, ops::ResizeDir::down),
                                  ctx.bicubic(x, k, ops::ResizeDir::down)));
    return loss;
}

double high_fidelity_loss(const Tensor& y0, const Tensor& x, int factor);

template <class Ctx>
using CxHook = std::function<typename Ctx::H(Ctx&, const typename Ctx::H& y1,
                                             const typename Ctx::H& x)>;

// Total perceptual objective:
//   gan * L_G^{RSGAN}(Y1) + cycle * avg_k L1(S_k Y1, S_k X) + cx * CX(Y1, X)
//   + l1 * L1(Y0, X) + cycle * avg_k L1(S_k Y0, S_k X).
// The context must resolve the discriminator's parameters. The CX hook
// defaults to the zero functional; its weight stays in LossWeights so a real
// contextual loss can be plugged in unchanged.
template <class Ctx>
typename Ctx::H total_perceptual_loss_t(Ctx& ctx, const typename Ctx::H& y1,
                                        const typename Ctx::H& y0, const typename Ctx::H& x,
                                        const DiscriminatorGraph& disc, const LossWeights& w,
                                        int factor, const CxHook<Ctx>& cx_hook = {}) {
    using H = typename Ctx::H;
    w.validate();
    const auto factors = pyramid_factors(factor);
    const double inv = 1.0 / static_cast<double>(factors.size());
    auto cycle = [&](const H& y) {
        H acc;
        bool first = true;
        for (int k : factors) {
            const H term = l1_t(ctx, ctx.bicubic(y, k, ops::ResizeDir::down),
                                ctx.bicubic(x, k, ops::ResizeDir::down));
            acc = first ? term : ctx.add(acc, term);
            first = false;
        }
        return ctx.mul_scalar(acc, inv);
    };

    H loss = ctx.mul_scalar(l1_t(ctx, y0, x), w.l1);
    loss = ctx.add(loss, ctx.mul_scalar(cycle(y0), w.cycle));
    loss = ctx.add(loss, ctx.mul_scalar(cycle(y1), w.cycle));
    if (w.gan != 0.0) {
        const int scales = disc.config().scales;
        const auto c_fake = disc.run(ctx, multiscale_pyramid(ctx, y1, scales));
        const auto c_real = disc.run(ctx, multiscale_pyramid(ctx, x, scales));
        const auto losses = rsgan_losses_t(ctx, c_real, c_fake);
        loss = ctx.add(loss, ctx.mul_scalar(losses.second, w.gan));
    }
    if (cx_hook && w.cx != 0.0)
        loss = ctx.add(loss, ctx.mul_scalar(cx_hook(ctx, y1, x), w.cx));
    return loss;
}

double total_perceptual_loss(const Tensor& y1, const Tensor& y0, const Tensor& x,
                             const DiscriminatorGraph& disc, const LossWeights& w, int factor);

}  // namespace mgbp::perceptual
