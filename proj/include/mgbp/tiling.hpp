#pragma once

#include <cstdint>
#include <vector>

#include "mgbp/graph.hpp"
#include "mgbp/tensor.hpp"

namespace mgbp::tiling {

// Separable blend window: strictly positive in (0,1], symmetric per axis.
// The taper is a raised cosine evaluated at half-sample offsets, so no weight
// is ever exactly zero; pluggable by replacing the per-axis vectors.
struct BlendWindow {
    std::vector<double> t, y, x;

    static std::vector<double> raised_cosine(int64_t n);
};

struct Tile {
    int64_t t0 = 0, y0 = 0, x0 = 0;
};

struct TilePlan {
    std::vector<int64_t> input_shape;
    int64_t tile_t = 1, tile_y = 1, tile_x = 1;
    int64_t halo = 0;  // context border cropped with each tile, discarded on output
    std::vector<Tile> tiles;
    BlendWindow window;
};

// Overlapping tile grid: origins advance by the stride and the last tile is
// clamped to the boundary, so the union always covers the input. Temporal
// stride defaults to 5 frames; spatial strides default to half the tile.
TilePlan plan_tiles(const std::vector<int64_t>& input_shape, int64_t tile_t, int64_t tile_y,
                    int64_t tile_x, int64_t temporal_stride = 5, int64_t spatial_stride = -1,
                    int64_t halo = 0);

// Windowed overlap-averaging: out = sum(window * tile_output) / sum(window),
// pixelwise. The noise field is sampled once at full resolution and cropped
// per tile, so overlapping tiles see identical noise. Tiles are accumulated
// in plan order.
Tensor tiled_infer(const NetworkGraph& g, const Tensor& input, const TilePlan& plan, double W,
                   uint64_t noise_seed);

struct SweepRow {
    double W = 0.0;
    double l1 = 0.0, rmse = 0.0, psnr_y = 0.0;  // vs reference; NaN when absent
    double vn_mean_abs = 0.0, vn_std = 0.0;     // raw VN statistics of the output
};

// Forward passes over a list of noise amplitudes with one fixed noise field,
// so only the amplitude varies across rows.
std::vector<SweepRow> sweep_noise(const NetworkGraph& g, const Tensor& input,
                                  const std::vector<double>& amplitudes,
                                  const Tensor* reference, uint64_t noise_seed);

struct PixelCoord {
    int64_t t = 0, y = 0, x = 0;
    int64_t channel = -1;  // -1: impulse on every image channel
};

// Frozen-activation impulse response: one recording pass fixes every relu
// mask, then the (now affine) network is probed at `pixel`, returning
// (f_frozen(input + delta*e) - f_frozen(input)) / delta.
Tensor dfv_impulse_response(const NetworkGraph& g, const Tensor& input, const PixelCoord& pixel,
                            double delta, double W = 0.0, uint64_t noise_seed = 0);

}  // namespace mgbp::tiling
