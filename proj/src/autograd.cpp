#include "mgbp/autograd.hpp"

#include <cmath>

#include "mgbp/rng.hpp"

namespace mgbp::autograd {

namespace o = mgbp::ops;

void Tape::check_open() const {
    if (consumed_) throw state_error("tape already consumed by backward(); reset() to reuse");
}

Var Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> back, std::string name) {
    check_open();
    nodes_.push_back(Node{std::move(value), std::move(name), std::move(back)});
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    consumed_ = false;
}

void Tape::accum(int32_t id, const Tensor& g) {
    auto& slot = grads_[static_cast<size_t>(id)];
    if (slot.empty()) {
        slot = g;
    } else {
        for (int64_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
    }
}

Var Tape::leaf(Tensor value, std::string name) {
    return push(std::move(value), nullptr, std::move(name));
}

Var Tape::conv(Var x, Var w, Var b, const ops::ConvSpec& spec) {
    Tensor y = o::conv(value(x), value(w), b.valid() ? value(b) : Tensor(), spec);
    const int32_t xi = x.id, wi = w.id, bi = b.id;
    const auto in_shape = value(x).shape();
    return push(std::move(y), [xi, wi, bi, spec, in_shape](Tape& t, const Tensor& cot) {
        t.accum(xi, o::conv_grad_input(cot, t.nodes_[size_t(wi)].value, spec, in_shape));
        t.accum(wi, o::conv_grad_weights(t.nodes_[size_t(xi)].value, cot, spec));
        if (bi >= 0) t.accum(bi, o::channel_sum(cot));
    });
}

Var Tape::conv_transposed(Var x, Var w, Var b, const ops::ConvSpec& spec) {
    Tensor y = o::conv_transposed(value(x), value(w), b.valid() ? value(b) : Tensor(), spec);
    const int32_t xi = x.id, wi = w.id, bi = b.id;
    return push(std::move(y), [xi, wi, bi, spec](Tape& t, const Tensor& cot) {
        t.accum(xi, o::conv(cot, t.nodes_[size_t(wi)].value, Tensor(), spec));
        t.accum(wi, o::conv_grad_weights(cot, t.nodes_[size_t(xi)].value, spec));
        if (bi >= 0) t.accum(bi, o::channel_sum(cot));
    });
}

Var Tape::relu(Var x) {
    Tensor m = o::relu_mask(value(x));
    Tensor y = o::mul(value(x), m);
    const int32_t xi = x.id;
    return push(std::move(y), [xi, m = std::move(m)](Tape& t, const Tensor& cot) {
        t.accum(xi, o::mul(cot, m));
    });
}

Var Tape::concat_channels(Var a, Var b) {
    Tensor y = o::concat_channels(value(a), value(b));
    const int32_t ai = a.id, bi = b.id;
    const int64_t ca = value(a).channels();
    const int64_t cb = value(b).channels();
    return push(std::move(y), [ai, bi, ca, cb](Tape& t, const Tensor& cot) {
        t.accum(ai, o::slice_channels(cot, 0, ca));
        t.accum(bi, o::slice_channels(cot, ca, ca + cb));
    });
}

Var Tape::bicubic_resize(Var x, int factor, ops::ResizeDir dir) {
    const int64_t in_h = value(x).height(), in_w = value(x).width();
    Tensor y = o::bicubic_resize(value(x), factor, dir);
    const int32_t xi = x.id;
    return push(std::move(y), [xi, factor, dir, in_h, in_w](Tape& t, const Tensor& cot) {
        t.accum(xi, o::bicubic_resize_adjoint(cot, factor, dir, in_h, in_w));
    });
}

Var Tape::gaussian_blur(Var x, int ksize, double sigma) {
    Tensor y = o::gaussian_blur(value(x), ksize, sigma);
    const int32_t xi = x.id;
    return push(std::move(y), [xi, ksize, sigma](Tape& t, const Tensor& cot) {
        t.accum(xi, o::gaussian_blur_adjoint(cot, ksize, sigma));
    });
}

Var Tape::shift2d(Var x, int dy, int dx) {
    Tensor y = o::shift2d(value(x), dy, dx);
    const int32_t xi = x.id;
    return push(std::move(y), [xi, dy, dx](Tape& t, const Tensor& cot) {
        t.accum(xi, o::shift2d_adjoint(cot, dy, dx));
    });
}

Var Tape::crop_time(Var x, int64_t t_out) {
    const int64_t t_in = value(x).time();
    Tensor y = o::crop_time(value(x), t_out);
    const int32_t xi = x.id;
    return push(std::move(y), [xi, t_in](Tape& t, const Tensor& cot) {
        t.accum(xi, o::crop_time_adjoint(cot, t_in));
    });
}

Var Tape::add(Var a, Var b) {
    Tensor y = o::add(value(a), value(b));
    const int32_t ai = a.id, bi = b.id;
    return push(std::move(y), [ai, bi](Tape& t, const Tensor& cot) {
        t.accum(ai, cot);
        t.accum(bi, cot);
    });
}

Var Tape::sub(Var a, Var b) {
    Tensor y = o::sub(value(a), value(b));
    const int32_t ai = a.id, bi = b.id;
    return push(std::move(y), [ai, bi](Tape& t, const Tensor& cot) {
        t.accum(ai, cot);
        t.accum(bi, o::mul_scalar(cot, -1.0));
    });
}

Var Tape::mul(Var a, Var b) {
    Tensor y = o::mul(value(a), value(b));
    const int32_t ai = a.id, bi = b.id;
    return push(std::move(y), [ai, bi](Tape& t, const Tensor& cot) {
        t.accum(ai, o::mul(cot, t.nodes_[size_t(bi)].value));
        t.accum(bi, o::mul(cot, t.nodes_[size_t(ai)].value));
    });
}

Var Tape::divide(Var a, Var b) {
    Tensor y = o::divide(value(a), value(b));
    const int32_t ai = a.id, bi = b.id;
    return push(std::move(y), [ai, bi](Tape& t, const Tensor& cot) {
        const Tensor& av = t.nodes_[size_t(ai)].value;
        const Tensor& bv = t.nodes_[size_t(bi)].value;
        t.accum(ai, o::divide(cot, bv));
        Tensor gb(cot.shape());
        for (int64_t i = 0; i < cot.numel(); ++i) gb[i] = -cot[i] * av[i] / (bv[i] * bv[i]);
        t.accum(bi, gb);
    });
}

Var Tape::add_scalar(Var a, double s) {
    Tensor y = o::add_scalar(value(a), s);
    const int32_t ai = a.id;
    return push(std::move(y), [ai](Tape& t, const Tensor& cot) { t.accum(ai, cot); });
}

Var Tape::mul_scalar(Var a, double s) {
    Tensor y = o::mul_scalar(value(a), s);
    const int32_t ai = a.id;
    return push(std::move(y), [ai, s](Tape& t, const Tensor& cot) {
        t.accum(ai, o::mul_scalar(cot, s));
    });
}

Var Tape::abs(Var a) {
    Tensor s = o::sign(value(a));
    Tensor y = o::abs(value(a));
    const int32_t ai = a.id;
    return push(std::move(y), [ai, s = std::move(s)](Tape& t, const Tensor& cot) {
        t.accum(ai, o::mul(cot, s));
    });
}

Var Tape::sqrt_clamp0(Var a) {
    Tensor y = o::sqrt_clamp0(value(a));
    // d/dx sqrt(max(x,0)) = 1/(2 sqrt(x)) for x > 0, else 0 (subgradient at 0).
    Tensor d(y.shape());
    for (int64_t i = 0; i < y.numel(); ++i) d[i] = y[i] > 0.0 ? 0.5 / y[i] : 0.0;
    const int32_t ai = a.id;
    return push(std::move(y), [ai, d = std::move(d)](Tape& t, const Tensor& cot) {
        t.accum(ai, o::mul(cot, d));
    });
}

Var Tape::softplus(Var a) {
    Tensor y = o::softplus(value(a));
    Tensor d(y.shape());
    const Tensor& av = value(a);
    for (int64_t i = 0; i < av.numel(); ++i) {
        const double v = av[i];
        d[i] = v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    const int32_t ai = a.id;
    return push(std::move(y), [ai, d = std::move(d)](Tape& t, const Tensor& cot) {
        t.accum(ai, o::mul(cot, d));
    });
}

Var Tape::sum_all(Var a) {
    Tensor y = o::sum_all(value(a));
    const int32_t ai = a.id;
    const auto shape = value(a).shape();
    return push(std::move(y), [ai, shape](Tape& t, const Tensor& cot) {
        t.accum(ai, Tensor::full(shape, cot[0]));
    });
}

Var Tape::mean_all(Var a) {
    Tensor y = o::mean_all(value(a));
    const int32_t ai = a.id;
    const auto shape = value(a).shape();
    const double inv = 1.0 / static_cast<double>(value(a).numel());
    return push(std::move(y), [ai, shape, inv](Tape& t, const Tensor& cot) {
        t.accum(ai, Tensor::full(shape, cot[0] * inv));
    });
}

Var Tape::mean_per_item(Var a) {
    Tensor y = o::mean_per_item(value(a));
    const int32_t ai = a.id;
    const auto shape = value(a).shape();
    const int64_t b = shape[0];
    const int64_t inner = value(a).numel() / b;
    return push(std::move(y), [ai, shape, b, inner](Tape& t, const Tensor& cot) {
        Tensor g(shape);
        for (int64_t i = 0; i < b; ++i) {
            const double v = cot[i] / static_cast<double>(inner);
            double* p = g.data() + i * inner;
            for (int64_t j = 0; j < inner; ++j) p[j] = v;
        }
        t.accum(ai, g);
    });
}

GradientMap Tape::backward(Var output, const Tensor& cotangent) {
    check_open();
    const Node& out = node(output);
    if (!cotangent.same_shape(out.value))
        throw contract_error("cotangent shape " + cotangent.shape_str() +
                             " does not match output " + out.value.shape_str());
    grads_.assign(nodes_.size(), Tensor());
    grads_[static_cast<size_t>(output.id)] = cotangent;
    for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
        const auto& g = grads_[static_cast<size_t>(i)];
        if (g.empty()) continue;
        auto& n = nodes_[static_cast<size_t>(i)];
        if (n.back) n.back(*this, g);
    }
    GradientMap gm;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].name.empty()) continue;
        auto& g = grads_[i];
        gm.grads[nodes_[i].name] = g.empty() ? Tensor(nodes_[i].value.shape()) : g;
    }
    consumed_ = true;
    return gm;
}

Tensor Tape::grad(Var v) const {
    if (!consumed_) throw state_error("grad() only valid after backward()");
    const Node& n = node(v);
    const auto& g = grads_[static_cast<size_t>(v.id)];
    return g.empty() ? Tensor(n.value.shape()) : g;
}

LeafMap register_leaves(Tape& tape, const std::map<std::string, Tensor>& values) {
    LeafMap leaves;
    for (const auto& [name, value] : values) leaves[name] = tape.leaf(value, name);
    return leaves;
}

Recording record_forward(const GraphFn& fn, const std::map<std::string, Tensor>& values) {
    Recording rec;
    rec.leaves = register_leaves(rec.tape, values);
    rec.output_var = fn(rec.tape, rec.leaves);
    rec.output = rec.tape.value(rec.output_var);
    return rec;
}

double finite_diff_check(const GraphFn& fn, const std::map<std::string, Tensor>& values,
                         double h, uint64_t seed, int samples) {
    Recording rec = record_forward(fn, values);
    if (rec.output.numel() != 1)
        throw contract_error("finite_diff_check requires a scalar-valued function, got " +
                             rec.output.shape_str());
    GradientMap gm = rec.tape.backward(rec.output_var, Tensor::scalar(1.0));

    auto eval = [&](const std::map<std::string, Tensor>& v) {
        Tape t;
        const LeafMap leaves = register_leaves(t, v);
        return t.value(fn(t, leaves))[0];
    };

    int64_t total = 0;
    for (const auto& [name, value] : values) total += value.numel();

    Rng rng(seed);
    double worst = 0.0;
    std::map<std::string, Tensor> work = values;
    for (int s = 0; s < samples; ++s) {
        int64_t flat = rng.below(total);
        auto it = work.begin();
        while (flat >= it->second.numel()) {
            flat -= it->second.numel();
            ++it;
        }
        const double orig = it->second[flat];
        it->second[flat] = orig + h;
        const double fp = eval(work);
        it->second[flat] = orig - h;
        const double fm = eval(work);
        it->second[flat] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = gm.at(it->first)[flat];
        const double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-3});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace mgbp::autograd
