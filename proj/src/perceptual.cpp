#include "mgbp/perceptual.hpp"

#include <cmath>

#include "mgbp/rng.hpp"

namespace mgbp::perceptual {

std::vector<int> pyramid_factors(int factor) {
    if (factor < 2) throw config_error("pyramid factor must be >= 2");
    std::vector<int> out;
    for (int k = 2; k <= factor; k *= 2) out.push_back(k);
    if (out.empty() || out.back() != factor) out.push_back(factor);
    return out;
}

int discriminator_scales(int factor) {
    return 1 + static_cast<int>(pyramid_factors(factor).size());
}

std::vector<double> gaussian_window(int ksize, double sigma) {
    if (ksize < 1 || ksize % 2 == 0)
        throw spec_error("gaussian window size must be odd, got " + std::to_string(ksize));
    const int c = ksize / 2;
    std::vector<double> g(static_cast<size_t>(ksize));
    double s1 = 0.0;
    for (int k = 0; k < ksize; ++k) {
        g[static_cast<size_t>(k)] = std::exp(-0.5 * (k - c) * (k - c) / (sigma * sigma));
        s1 += g[static_cast<size_t>(k)];
    }
    std::vector<double> w(static_cast<size_t>(ksize) * ksize);
    for (int i = 0; i < ksize; ++i)
        for (int j = 0; j < ksize; ++j)
            w[static_cast<size_t>(i * ksize + j)] =
                g[static_cast<size_t>(i)] * g[static_cast<size_t>(j)] / (s1 * s1);
    return w;
}

namespace {
const std::map<std::string, Tensor>& empty_params() {
    static const std::map<std::string, Tensor> m;
    return m;
}
}  // namespace

Tensor luminance_weights() {
    return Tensor({1, 3, 1, 1}, {0.299, 0.587, 0.114});
}

Tensor luminance_bt609(const Tensor& rgb) {
    exec::EvalCtx ctx(empty_params());
    return luminance_bt609_t(ctx, rgb);
}

Tensor variance_normalize(const Tensor& lum, const VnscConfig& cfg) {
    exec::EvalCtx ctx(empty_params());
    return variance_normalize_t(ctx, lum, cfg);
}

Tensor vnsc(const Tensor& rgb, const VnscConfig& cfg) {
    exec::EvalCtx ctx(empty_params());
    return vnsc_t(ctx, rgb, cfg);
}

DiscConfig DiscConfig::for_factor(int factor) {
    DiscConfig c;
    c.scales = discriminator_scales(factor);
    return c;
}

void DiscConfig::validate() const {
    if (scales < 1) throw config_error("discriminator needs at least one scale");
    if (width < 1) throw config_error("discriminator width must be >= 1");
    if (vnsc.kernel < 1 || vnsc.kernel % 2 == 0)
        throw config_error("vnsc kernel must be odd");
    if (vnsc.range < 0) throw config_error("vnsc range must be >= 0");
}

std::string DiscConfig::canonical() const {
    return "disc;scales=" + std::to_string(scales) + ";width=" + std::to_string(width) +
           ";vnsc=" + std::to_string(vnsc.kernel) + "/" + std::to_string(vnsc.sigma) + "/" +
           std::to_string(vnsc.range);
}

DiscriminatorGraph DiscriminatorGraph::build(const DiscConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    DiscriminatorGraph d;
    d.cfg_ = cfg;
    const int64_t vn_ch = cfg.vnsc.out_channels();
    for (int b = 0; b < cfg.scales; ++b) {
        for (int l = 0; l < 4; ++l) {
            Layer layer;
            layer.name = "block" + std::to_string(b) + ".conv" + std::to_string(l);
            ops::ConvSpec& s = layer.spec;
            s.in_channels = l == 0 ? (b == 0 ? vn_ch : cfg.width + vn_ch) : cfg.width;
            s.out_channels = cfg.width;
            s.kh = s.kw = 3;
            s.ph = s.pw = 1;
            s.sh = s.sw = (l == 3) ? 2 : 1;
            d.layers_.push_back(layer);
        }
    }
    Layer head;
    head.name = "head";
    head.spec.in_channels = cfg.width;
    head.spec.out_channels = 1;
    d.layers_.push_back(head);

    Rng rng(init_seed);
    for (const auto& layer : d.layers_) {
        const auto& s = layer.spec;
        Tensor w({s.out_channels, s.in_channels, s.kh, s.kw});
        if (layer.name != "head") {
            const double bound =
                std::sqrt(1.0 / static_cast<double>(s.in_channels * s.kh * s.kw));
            for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
        }
        d.params_[layer.name + ".weight"] = std::move(w);
        d.params_[layer.name + ".bias"] = Tensor({s.out_channels});
    }
    return d;
}

int64_t DiscriminatorGraph::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

Tensor DiscriminatorGraph::forward(const std::vector<Tensor>& scales) const {
    exec::EvalCtx ctx(params_);
    return run(ctx, scales);
}

RsganLosses rsgan_losses(const Tensor& c_real, const Tensor& c_fake) {
    exec::EvalCtx ctx(empty_params());
    auto [d, g] = rsgan_losses_t(ctx, c_real, c_fake);
    return {d[0], g[0]};
}

double high_fidelity_loss(const Tensor& y0, const Tensor& x, int factor) {
    exec::EvalCtx ctx(empty_params());
    return high_fidelity_loss_t(ctx, y0, x, factor)[0];
}

double total_perceptual_loss(const Tensor& y1, const Tensor& y0, const Tensor& x,
                             const DiscriminatorGraph& disc, const LossWeights& w, int factor) {
    exec::EvalCtx ctx(disc.params());
    return total_perceptual_loss_t(ctx, y1, y0, x, disc, w, factor)[0];
}

}  // namespace mgbp::perceptual
