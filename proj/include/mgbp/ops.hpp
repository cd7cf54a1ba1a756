#pragma once

#include <cstdint>
#include <vector>

#include "mgbp/tensor.hpp"

namespace mgbp::ops {

// Strided convolution / transposed-convolution geometry. Axis order is
// (time, height, width); for 4D tensors the temporal entries must stay at
// their defaults (kt=1, st=1, pt=0). Weights are laid out
// (out_channels, in_channels, [kt,] kh, kw) and the convolution is a
// cross-correlation: no kernel flip.
struct ConvSpec {
    int64_t in_channels = 1;
    int64_t out_channels = 1;
    int kt = 1, kh = 1, kw = 1;
    int st = 1, sh = 1, sw = 1;
    int pt = 0, ph = 0, pw = 0;

    static int64_t conv_extent(int64_t in, int k, int s, int p) {
        return (in + 2 * p - k) / s + 1;
    }
    static int64_t tconv_extent(int64_t in, int k, int s, int p) {
        return (in - 1) * s - 2 * p + k;
    }
};

// y = x (*) w + b with zero padding. Throws dimension_error on channel/shape
// mismatch (naming the axis) and spec_error when an output extent is < 1.
Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);

// Adjoint map of conv for the same spec and weights: consumes an
// out_channels tensor, produces an in_channels tensor. Bias (length
// in_channels) is added after the transposed filtering.
Tensor conv_transposed(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);

// Backward kernels, shared by the autograd tape.
Tensor conv_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& spec);
Tensor channel_sum(const Tensor& gy);  // gradient of a per-channel bias

// Exact adjoint of conv into a given input shape. conv_transposed recovers
// the minimal preimage extent; when (in + 2p - k) is not a stride multiple
// the true input is larger, so the gradient must target it explicitly.
Tensor conv_grad_input(const Tensor& gy, const Tensor& w, const ConvSpec& spec,
                       const std::vector<int64_t>& in_shape);

Tensor relu(const Tensor& x);
Tensor relu_mask(const Tensor& x);  // 1.0 where x > 0, else 0.0

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int64_t c0, int64_t c1);  // [c0, c1)

enum class ResizeDir { up, down };

// Catmull-Rom bicubic (a = -0.5) resampling of the spatial axes by an integer
// factor; replicate borders; downscaling is antialiased (kernel stretched by
// the factor). The factor must be a power of 2 or 3.
Tensor bicubic_resize(const Tensor& x, int factor, ResizeDir dir);
Tensor bicubic_resize_adjoint(const Tensor& g, int factor, ResizeDir dir,
                              int64_t in_h, int64_t in_w);

// Normalized Gaussian filter (odd kernel, replicate borders) over H and W.
Tensor gaussian_blur(const Tensor& x, int ksize, double sigma);
Tensor gaussian_blur_adjoint(const Tensor& g, int ksize, double sigma);

// Translate by (dy, dx) with replicate borders: out[i,j] = x[i+dy, j+dx].
Tensor shift2d(const Tensor& x, int dy, int dx);
Tensor shift2d_adjoint(const Tensor& g, int dy, int dx);

// Center crop / zero-pad of the temporal axis (5D tensors; the difference of
// extents must be even so the crop is symmetric).
Tensor crop_time(const Tensor& x, int64_t t_out);
Tensor crop_time_adjoint(const Tensor& g, int64_t t_in);

// Spatial crop/paste on the last two axes, used by the tiled inference path.
Tensor crop_spatial(const Tensor& x, int64_t t0, int64_t te, int64_t y0, int64_t ye,
                    int64_t x0, int64_t xe);

// Elementwise arithmetic (shapes must match exactly).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);  // sign(0) = 0
Tensor sqrt_clamp0(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + exp(a)), overflow-safe

Tensor sum_all(const Tensor& a);   // shape {1}
Tensor mean_all(const Tensor& a);  // shape {1}
Tensor mean_per_item(const Tensor& a);  // (B, ...) -> (B)

double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mgbp::ops
