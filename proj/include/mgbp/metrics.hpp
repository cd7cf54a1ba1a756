#pragma once

#include <string>

#include "mgbp/tensor.hpp"

namespace mgbp::metrics {

struct MetricReport {
    double psnr_y = 0.0;  // dB; +inf when the images are identical
    double ssim_y = 0.0;
    double rmse = 0.0;
    double l1 = 0.0;

    std::string line(const std::string& name) const;
    std::string json_record(const std::string& name) const;
};

// PSNR on BT.609 luminance with `border_crop` pixels removed per side (the SR
// convention is crop = scale factor). Inputs are RGB in [0, 255].
double psnr_y(const Tensor& a, const Tensor& b, int border_crop = 0);

// Mean SSIM on luminance, Gaussian window (valid region only), dynamic range
// 255. Canonical constants: window 11, sigma 1.5, k1 0.01, k2 0.03.
double ssim_y(const Tensor& a, const Tensor& b, int window = 11, double sigma = 1.5,
              double k1 = 0.01, double k2 = 0.03);

double rmse(const Tensor& a, const Tensor& b);
double l1(const Tensor& a, const Tensor& b);

MetricReport evaluate(const Tensor& out, const Tensor& reference, int border_crop);

}  // namespace mgbp::metrics
