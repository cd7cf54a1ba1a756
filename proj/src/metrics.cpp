#include "mgbp/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "mgbp/ops.hpp"
#include "mgbp/perceptual.hpp"

namespace mgbp::metrics {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

Tensor cropped_luminance(const Tensor& rgb, int border) {
    Tensor y = perceptual::luminance_bt609(rgb);
    if (border == 0) return y;
    const int64_t h = y.height(), w = y.width();
    if (2 * border >= h || 2 * border >= w)
        throw dimension_error("border crop " + std::to_string(border) +
                              " leaves no pixels for extent " + std::to_string(h) + "x" +
                              std::to_string(w));
    return ops::crop_spatial(y, 0, y.time(), border, h - border, border, w - border);
}

}  // namespace

double psnr_y(const Tensor& a, const Tensor& b, int border_crop) {
    check_pair(a, b, "psnr_y");
    const Tensor ya = cropped_luminance(a, border_crop);
    const Tensor yb = cropped_luminance(b, border_crop);
    double mse = 0.0;
    for (int64_t i = 0; i < ya.numel(); ++i) {
        const double d = ya[i] - yb[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ya.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim_y(const Tensor& a, const Tensor& b, int window, double sigma, double k1, double k2) {
    check_pair(a, b, "ssim_y");
    if (window < 1 || window % 2 == 0) throw spec_error("ssim window must be odd");
    const Tensor ya = perceptual::luminance_bt609(a);
    const Tensor yb = perceptual::luminance_bt609(b);
    const auto win = perceptual::gaussian_window(window, sigma);
    const int r = window / 2;
    const int64_t bt = ya.batch() * ya.time();
    const int64_t h = ya.height(), w = ya.width();
    if (h < window || w < window)
        throw dimension_error("image smaller than the SSIM window");
    const double c1 = (k1 * 255.0) * (k1 * 255.0);
    const double c2 = (k2 * 255.0) * (k2 * 255.0);

    double total = 0.0;
    int64_t count = 0;
    for (int64_t s = 0; s < bt; ++s) {
        const double* pa = ya.data() + s * h * w;
        const double* pb = yb.data() + s * h * w;
        for (int64_t i = r; i < h - r; ++i) {
            for (int64_t j = r; j < w - r; ++j) {
                double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                for (int u = -r; u <= r; ++u) {
                    for (int v = -r; v <= r; ++v) {
                        const double wk = win[static_cast<size_t>((u + r) * window + (v + r))];
                        const double va = pa[(i + u) * w + (j + v)];
                        const double vb = pb[(i + u) * w + (j + v)];
                        mx += wk * va;
                        my += wk * vb;
                        xx += wk * va * va;
                        yy += wk * vb * vb;
                        xy += wk * va * vb;
                    }
                }
                const double sx = xx - mx * mx;
                const double sy = yy - my * my;
                const double sxy = xy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sx + sy + c2));
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double rmse(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "rmse");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.numel()));
}

double l1(const Tensor& a, const Tensor& b) {
    check_pair(a, b, "l1");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += std::fabs(a[i] - b[i]);
    return acc / static_cast<double>(a.numel());
}

MetricReport evaluate(const Tensor& out, const Tensor& reference, int border_crop) {
    MetricReport r;
    r.psnr_y = psnr_y(out, reference, border_crop);
    r.ssim_y = ssim_y(out, reference);
    r.rmse = rmse(out, reference);
    r.l1 = l1(out, reference);
    return r;
}

std::string MetricReport::line(const std::string& name) const {
    std::ostringstream os;
    os << name << "  psnr_y=" << psnr_y << " ssim_y=" << ssim_y << " rmse=" << rmse
       << " l1=" << l1;
    return os.str();
}

std::string MetricReport::json_record(const std::string& name) const {
    std::ostringstream os;
    os << "{\"name\":\"" << name << "\",\"psnr_y\":";
    if (std::isinf(psnr_y))
        os << "\"inf\"";
    else
        os << psnr_y;
    os << ",\"ssim_y\":" << ssim_y << ",\"rmse\":" << rmse << ",\"l1\":" << l1 << "}";
    return os.str();
}

}  // namespace mgbp::metrics
