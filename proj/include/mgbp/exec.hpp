#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgbp/autograd.hpp"
#include "mgbp/modules.hpp"
#include "mgbp/ops.hpp"

namespace mgbp::exec {

// The generator, discriminator and loss functions are written once as
// templates over a context; the context decides whether the pass produces
// tensors (EvalCtx), a differentiation record (TapeCtx) or shapes and cost
// counters (ShapeCtx in graph.hpp). All three resolve parameters by name, so
// eval and taped passes run the exact same kernels in the same order.

class EvalCtx {
public:
    using H = Tensor;

    enum class ReluMode { normal, record, frozen };

    EvalCtx(const std::map<std::string, Tensor>& params, std::string prefix = "")
        : params_(&params), prefix_(std::move(prefix)) {}

    ReluMode relu_mode = ReluMode::normal;
    std::vector<Tensor> masks;  // filled in record mode, consumed in frozen mode
    size_t mask_cursor = 0;

    const Tensor& param(const std::string& name) const {
        auto it = params_->find(prefix_ + name);
        if (it == params_->end()) throw contract_error("missing parameter '" + prefix_ + name + "'");
        return it->second;
    }

    H module_conv(const H& x, const ModuleDef& def) const {
        const std::string base = def.tag.str();
        const Tensor& w = param(base + ".weight");
        const Tensor& b = param(base + ".bias");
        return def.transposed ? ops::conv_transposed(x, w, b, def.spec)
                              : ops::conv(x, w, b, def.spec);
    }
    H conv_named(const H& x, const std::string& name, const ops::ConvSpec& spec) const {
        return ops::conv(x, param(name + ".weight"), param(name + ".bias"), spec);
    }
    H conv_const(const H& x, const Tensor& w, const ops::ConvSpec& spec) const {
        return ops::conv(x, w, Tensor(), spec);
    }

    H relu(const H& x) {
        switch (relu_mode) {
            case ReluMode::normal:
                return ops::relu(x);
            case ReluMode::record: {
                masks.push_back(ops::relu_mask(x));
                return ops::mul(x, masks.back());
            }
            case ReluMode::frozen: {
                if (mask_cursor >= masks.size())
                    throw state_error("frozen relu: mask record exhausted");
                return ops::mul(x, masks[mask_cursor++]);
            }
        }
        return x;
    }

    H concat(const H& a, const H& b) const { return ops::concat_channels(a, b); }
    H add(const H& a, const H& b) const { return ops::add(a, b); }
    H sub(const H& a, const H& b) const { return ops::sub(a, b); }
    H mul(const H& a, const H& b) const { return ops::mul(a, b); }
    H divide(const H& a, const H& b) const { return ops::divide(a, b); }
    H add_scalar(const H& a, double s) const { return ops::add_scalar(a, s); }
    H mul_scalar(const H& a, double s) const { return ops::mul_scalar(a, s); }
    H abs(const H& a) const { return ops::abs(a); }
    H sqrt_clamp0(const H& a) const { return ops::sqrt_clamp0(a); }
    H softplus(const H& a) const { return ops::softplus(a); }
    H mean_all(const H& a) const { return ops::mean_all(a); }
    H mean_per_item(const H& a) const { return ops::mean_per_item(a); }
    H bicubic(const H& a, int f, ops::ResizeDir d) const { return ops::bicubic_resize(a, f, d); }
    H gaussian_blur(const H& a, int k, double s) const { return ops::gaussian_blur(a, k, s); }
    H shift2d(const H& a, int dy, int dx) const { return ops::shift2d(a, dy, dx); }
    H crop_time(const H& a, int64_t t) const { return ops::crop_time(a, t); }
    H constant(Tensor v) const { return v; }

    int64_t time(const H& a) const { return a.time(); }
    int64_t channels(const H& a) const { return a.channels(); }
    int64_t height(const H& a) const { return a.height(); }
    int64_t width(const H& a) const { return a.width(); }
    double scalar(const H& a) const { return a[0]; }

    void set_refs(const std::vector<H>&) const {}
    void bp_invoked(int, const H&) const {}
    void bp_enter(const H&) const {}
    void bp_exit(const H&, const H&) const {}

private:
    const std::map<std::string, Tensor>* params_;
    std::string prefix_;
};

class TapeCtx {
public:
    using H = autograd::Var;

    TapeCtx(autograd::Tape& tape, const autograd::LeafMap& leaves, std::string prefix = "")
        : tape_(&tape), leaves_(&leaves), prefix_(std::move(prefix)) {}

    autograd::Tape& tape() const { return *tape_; }

    H param(const std::string& name) const {
        auto it = leaves_->find(prefix_ + name);
        if (it == leaves_->end())
            throw contract_error("missing tape leaf '" + prefix_ + name + "'");
        return it->second;
    }

    H module_conv(const H& x, const ModuleDef& def) const {
        const std::string base = def.tag.str();
        const H w = param(base + ".weight");
        const H b = param(base + ".bias");
        return def.transposed ? tape_->conv_transposed(x, w, b, def.spec)
                              : tape_->conv(x, w, b, def.spec);
    }
    H conv_named(const H& x, const std::string& name, const ops::ConvSpec& spec) const {
        return tape_->conv(x, param(name + ".weight"), param(name + ".bias"), spec);
    }
    H conv_const(const H& x, const Tensor& w, const ops::ConvSpec& spec) const {
        return tape_->conv(x, tape_->leaf(w), autograd::Var{}, spec);
    }

    H relu(const H& x) const { return tape_->relu(x); }
    H concat(const H& a, const H& b) const { return tape_->concat_channels(a, b); }
    H add(const H& a, const H& b) const { return tape_->add(a, b); }
    H sub(const H& a, const H& b) const { return tape_->sub(a, b); }
    H mul(const H& a, const H& b) const { return tape_->mul(a, b); }
    H divide(const H& a, const H& b) const { return tape_->divide(a, b); }
    H add_scalar(const H& a, double s) const { return tape_->add_scalar(a, s); }
    H mul_scalar(const H& a, double s) const { return tape_->mul_scalar(a, s); }
    H abs(const H& a) const { return tape_->abs(a); }
    H sqrt_clamp0(const H& a) const { return tape_->sqrt_clamp0(a); }
    H softplus(const H& a) const { return tape_->softplus(a); }
    H mean_all(const H& a) const { return tape_->mean_all(a); }
    H mean_per_item(const H& a) const { return tape_->mean_per_item(a); }
    H bicubic(const H& a, int f, ops::ResizeDir d) const { return tape_->bicubic_resize(a, f, d); }
    H gaussian_blur(const H& a, int k, double s) const { return tape_->gaussian_blur(a, k, s); }
    H shift2d(const H& a, int dy, int dx) const { return tape_->shift2d(a, dy, dx); }
    H crop_time(const H& a, int64_t t) const { return tape_->crop_time(a, t); }
    H constant(Tensor v) const { return tape_->leaf(std::move(v)); }

    int64_t time(const H& a) const { return tape_->value(a).time(); }
    int64_t channels(const H& a) const { return tape_->value(a).channels(); }
    int64_t height(const H& a) const { return tape_->value(a).height(); }
    int64_t width(const H& a) const { return tape_->value(a).width(); }
    double scalar(const H& a) const { return tape_->value(a)[0]; }

    void set_refs(const std::vector<H>&) const {}
    void bp_invoked(int, const H&) const {}
    void bp_enter(const H&) const {}
    void bp_exit(const H&, const H&) const {}

private:
    autograd::Tape* tape_;
    const autograd::LeafMap* leaves_;
    std::string prefix_;
};

}  // namespace mgbp::exec
