#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgbp/errors.hpp"

namespace mgbp {

// Dense row-major tensor of doubles. Image layout is (batch, channels, height,
// width) for 2D and (batch, channels, time, height, width) for spatio-temporal
// cubes; the innermost axis is contiguous. Tensors are plain values: ops never
// mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(checked_numel(shape_)), 0.0);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw dimension_error("tensor data length does not match shape product");
    }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    bool empty() const { return data_.empty(); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Image-axis accessors; time() is 1 for 4D tensors.
    int64_t batch() const { return image_dim(0); }
    int64_t channels() const { return image_dim(1); }
    int64_t time() const { return ndim() == 5 ? shape_[2] : 1; }
    int64_t height() const { return shape_[static_cast<size_t>(ndim() - 2)]; }
    int64_t width() const { return shape_[static_cast<size_t>(ndim() - 1)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::string shape_str(const std::vector<int64_t>& s);
    std::string shape_str() const { return shape_str(shape_); }

private:
    int64_t image_dim(int i) const {
        if (ndim() < 3)
            throw dimension_error("tensor with " + std::to_string(ndim()) +
                                  " dims has no image axes");
        return shape_[static_cast<size_t>(i)];
    }

    static int64_t checked_numel(const std::vector<int64_t>& shape) {
        if (shape.empty()) throw dimension_error("tensor must have at least one dimension");
        int64_t n = 1;
        for (size_t i = 0; i < shape.size(); ++i) {
            if (shape[i] < 1)
                throw dimension_error("dimension " + std::to_string(i) +
                                      " must be >= 1, got " + std::to_string(shape[i]));
            n *= shape[i];
        }
        return n;
    }

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// Raw tensor file format ("MGBT"): magic, version u8, dtype u8 (0=f32, 1=f64),
// ndim u8, shape as little-endian u32 per dim, then row-major LE payload.
enum class MgbtDtype : uint8_t { f32 = 0, f64 = 1 };

void write_mgbt(const Tensor& t, const std::string& path, MgbtDtype dtype = MgbtDtype::f64);
Tensor read_mgbt(const std::string& path);

// Stream variants used by the checkpoint format.
void write_mgbt_stream(const Tensor& t, std::string& out, MgbtDtype dtype = MgbtDtype::f64);
Tensor read_mgbt_stream(const uint8_t* data, size_t size, size_t& offset);

}  // namespace mgbp
