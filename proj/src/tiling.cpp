#include "mgbp/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgbp/metrics.hpp"
#include "mgbp/ops.hpp"
#include "mgbp/perceptual.hpp"

namespace mgbp::tiling {

std::vector<double> BlendWindow::raised_cosine(int64_t n) {
    std::vector<double> w(static_cast<size_t>(n), 1.0);
    if (n <= 1) return w;
    const double pi = 3.14159265358979323846;
    for (int64_t i = 0; i <= (n - 1) / 2; ++i) {
        const double v = 0.5 - 0.5 * std::cos(2.0 * pi * (i + 0.5) / static_cast<double>(n));
        w[static_cast<size_t>(i)] = v;
        w[static_cast<size_t>(n - 1 - i)] = v;  // bitwise symmetric
    }
    return w;
}

namespace {

std::vector<int64_t> axis_origins(int64_t extent, int64_t tile, int64_t stride,
                                  const char* axis) {
    if (tile < 1 || tile > extent)
        throw config_error(std::string("tile extent ") + std::to_string(tile) + " on " + axis +
                           " axis must be in [1, " + std::to_string(extent) + "]");
    if (stride < 1) stride = 1;
    std::vector<int64_t> origins;
    int64_t o = 0;
    while (true) {
        origins.push_back(o);
        if (o + tile >= extent) break;
        o = std::min(o + stride, extent - tile);
    }
    return origins;
}

struct Dims {
    int64_t b, c, t, h, w;
};

Dims dims_of(const std::vector<int64_t>& s) {
    if (s.size() == 4) return {s[0], s[1], 1, s[2], s[3]};
    if (s.size() == 5) return {s[0], s[1], s[2], s[3], s[4]};
    throw dimension_error("tiling expects a 4D or 5D shape");
}

}  // namespace

TilePlan plan_tiles(const std::vector<int64_t>& input_shape, int64_t tile_t, int64_t tile_y,
                    int64_t tile_x, int64_t temporal_stride, int64_t spatial_stride,
                    int64_t halo) {
    const Dims d = dims_of(input_shape);
    if (input_shape.size() == 4) tile_t = 1;
    if (halo < 0) throw config_error("halo must be >= 0");
    TilePlan plan;
    plan.input_shape = input_shape;
    plan.tile_t = tile_t;
    plan.tile_y = tile_y;
    plan.tile_x = tile_x;
    plan.halo = halo;
    const int64_t sy = spatial_stride > 0 ? spatial_stride : std::max<int64_t>(1, tile_y / 2);
    const int64_t sx = spatial_stride > 0 ? spatial_stride : std::max<int64_t>(1, tile_x / 2);
    const auto ot = axis_origins(d.t, tile_t, temporal_stride, "time");
    const auto oy = axis_origins(d.h, tile_y, sy, "height");
    const auto ox = axis_origins(d.w, tile_x, sx, "width");
    for (int64_t t0 : ot)
        for (int64_t y0 : oy)
            for (int64_t x0 : ox) plan.tiles.push_back(Tile{t0, y0, x0});
    plan.window.t = BlendWindow::raised_cosine(tile_t);
    plan.window.y = BlendWindow::raised_cosine(tile_y);
    plan.window.x = BlendWindow::raised_cosine(tile_x);
    return plan;
}

Tensor tiled_infer(const NetworkGraph& g, const Tensor& input, const TilePlan& plan, double W,
                   uint64_t noise_seed) {
    if (input.shape() != plan.input_shape)
        throw dimension_error("tile plan was built for shape " +
                              Tensor::shape_str(plan.input_shape) + ", input is " +
                              input.shape_str());
    const Dims d = dims_of(input.shape());
    const Tensor noise = g.make_noise(input.shape(), noise_seed, W);

    Tensor out(input.shape());
    std::vector<double> wsum(static_cast<size_t>(d.t * d.h * d.w), 0.0);
    const bool is3d = input.ndim() == 5;

    for (const Tile& tile : plan.tiles) {
        const int64_t ct0 = is3d ? std::max<int64_t>(0, tile.t0 - plan.halo) : 0;
        const int64_t cte = is3d ? std::min<int64_t>(d.t, tile.t0 + plan.tile_t + plan.halo) : 1;
        const int64_t cy0 = std::max<int64_t>(0, tile.y0 - plan.halo);
        const int64_t cye = std::min<int64_t>(d.h, tile.y0 + plan.tile_y + plan.halo);
        const int64_t cx0 = std::max<int64_t>(0, tile.x0 - plan.halo);
        const int64_t cxe = std::min<int64_t>(d.w, tile.x0 + plan.tile_x + plan.halo);

        const Tensor xin = ops::crop_spatial(input, ct0, cte, cy0, cye, cx0, cxe);
        const Tensor nin = ops::crop_spatial(noise, ct0, cte, cy0, cye, cx0, cxe);
        const Tensor yout = g.forward_with_noise(xin, nin);

        const int64_t lt = tile.t0 - ct0, ly = tile.y0 - cy0, lx = tile.x0 - cx0;
        const int64_t cth = cye - cy0, ctw = cxe - cx0;
        for (int64_t bb = 0; bb < d.b; ++bb) {
            for (int64_t c = 0; c < d.c; ++c) {
                for (int64_t t = 0; t < plan.tile_t; ++t) {
                    const double wt = plan.window.t[static_cast<size_t>(t)];
                    for (int64_t y = 0; y < plan.tile_y; ++y) {
                        const double wty = wt * plan.window.y[static_cast<size_t>(y)];
                        const int64_t gt = tile.t0 + t, gy = tile.y0 + y;
                        double* orow =
                            out.data() + (((bb * d.c + c) * d.t + gt) * d.h + gy) * d.w + tile.x0;
                        const double* trow = yout.data() +
                                             (((bb * d.c + c) * (cte - ct0) + (lt + t)) * cth +
                                              (ly + y)) * ctw + lx;
                        double* wrow = (bb == 0 && c == 0)
                                           ? wsum.data() + (gt * d.h + gy) * d.w + tile.x0
                                           : nullptr;
                        for (int64_t x = 0; x < plan.tile_x; ++x) {
                            const double wk = wty * plan.window.x[static_cast<size_t>(x)];
                            orow[x] += wk * trow[x];
                            if (wrow) wrow[x] += wk;
                        }
                    }
                }
            }
        }
    }

    for (const double v : wsum)
        if (!(v > 0.0))
            throw state_error("tiled_infer: accumulated window weight is zero at some pixel; "
                              "the plan does not cover the input");
    for (int64_t bb = 0; bb < d.b; ++bb)
        for (int64_t c = 0; c < d.c; ++c) {
            double* base = out.data() + (bb * d.c + c) * d.t * d.h * d.w;
            for (int64_t i = 0; i < d.t * d.h * d.w; ++i) base[i] /= wsum[static_cast<size_t>(i)];
        }
    return out;
}

std::vector<SweepRow> sweep_noise(const NetworkGraph& g, const Tensor& input,
                                  const std::vector<double>& amplitudes,
                                  const Tensor* reference, uint64_t noise_seed) {
    std::vector<SweepRow> rows;
    rows.reserve(amplitudes.size());
    for (double W : amplitudes) {
        if (!(W >= 0.0) || !std::isfinite(W))
            throw config_error("noise amplitudes must be finite and >= 0");
        const Tensor y = g.forward(input, noise_seed, W);
        SweepRow row;
        row.W = W;
        if (reference) {
            row.l1 = metrics::l1(y, *reference);
            row.rmse = metrics::rmse(y, *reference);
            row.psnr_y = metrics::psnr_y(y, *reference, g.config().factor);
        } else {
            row.l1 = row.rmse = row.psnr_y = std::numeric_limits<double>::quiet_NaN();
        }
        const Tensor vn = perceptual::variance_normalize(perceptual::luminance_bt609(y));
        double sum = 0.0, sum2 = 0.0, sabs = 0.0;
        for (int64_t i = 0; i < vn.numel(); ++i) {
            sum += vn[i];
            sum2 += vn[i] * vn[i];
            sabs += std::fabs(vn[i]);
        }
        const double n = static_cast<double>(vn.numel());
        row.vn_mean_abs = sabs / n;
        const double var = sum2 / n - (sum / n) * (sum / n);
        row.vn_std = var > 0.0 ? std::sqrt(var) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

Tensor dfv_impulse_response(const NetworkGraph& g, const Tensor& input, const PixelCoord& pixel,
                            double delta, double W, uint64_t noise_seed) {
    const Dims d = dims_of(input.shape());
    if (pixel.t < 0 || pixel.t >= d.t || pixel.y < 0 || pixel.y >= d.h || pixel.x < 0 ||
        pixel.x >= d.w || pixel.channel >= d.c)
        throw bounds_error("impulse pixel outside the input extent");
    if (delta == 0.0) throw contract_error("impulse amplitude must be nonzero");

    const Tensor noise = g.make_noise(input.shape(), noise_seed, W);
    const Tensor x = ops::concat_channels(input, noise);

    // 1) record every relu mask on the unperturbed input
    exec::EvalCtx record(g.params());
    record.relu_mode = exec::EvalCtx::ReluMode::record;
    g.run(record, x);

    auto frozen_run = [&](const Tensor& img) {
        exec::EvalCtx frozen(g.params());
        frozen.relu_mode = exec::EvalCtx::ReluMode::frozen;
        frozen.masks = record.masks;
        frozen.mask_cursor = 0;
        return g.run(frozen, ops::concat_channels(img, noise));
    };

    Tensor perturbed = input;
    for (int64_t c = 0; c < d.c; ++c) {
        if (pixel.channel >= 0 && c != pixel.channel) continue;
        const int64_t idx = (((0 * d.c + c) * d.t + pixel.t) * d.h + pixel.y) * d.w + pixel.x;
        perturbed[idx] += delta;
    }
    const Tensor base = frozen_run(input);
    const Tensor resp = frozen_run(perturbed);
    return ops::mul_scalar(ops::sub(resp, base), 1.0 / delta);
}

}  // namespace mgbp::tiling
