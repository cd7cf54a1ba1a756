#include "mgbp/graph.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mgbp/rng.hpp"

namespace mgbp {

namespace {

int64_t ipow64(int64_t base, int e) {
    int64_t r = 1;
    while (e-- > 0) r *= base;
    return r;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void check_image_shape(const MgbpConfig& cfg, const std::vector<int64_t>& shape) {
    const int want = cfg.dims == 3 ? 5 : 4;
    if (static_cast<int>(shape.size()) != want)
        throw dimension_error("input must be " + std::to_string(want) + "D for a " +
                              std::to_string(cfg.dims) + "D config, got " +
                              Tensor::shape_str(shape));
    if (shape[1] != cfg.image_channels)
        throw dimension_error("channel axis: input has " + std::to_string(shape[1]) +
                              " channels, config expects " + std::to_string(cfg.image_channels));
    const int64_t div = ipow64(cfg.stage_stride, cfg.levels - 1);
    const int64_t h = shape[shape.size() - 2];
    const int64_t w = shape[shape.size() - 1];
    if (h % div != 0)
        throw dimension_error("height axis: extent " + std::to_string(h) +
                              " must be divisible by " + std::to_string(div) + " for " +
                              std::to_string(cfg.levels) + " levels");
    if (w % div != 0)
        throw dimension_error("width axis: extent " + std::to_string(w) +
                              " must be divisible by " + std::to_string(div) + " for " +
                              std::to_string(cfg.levels) + " levels");
}

}  // namespace

// --------------------------------------------------------------------------
// ShapeCtx

ShapeCtx::H ShapeCtx::module_conv(const H& x, const ModuleDef& def) {
    const auto& s = def.spec;
    const size_t row = trace.rows.size();
    auto fail = [&](const std::string& msg) -> spec_error {
        return spec_error("module " + def.tag.str() + " (trace row " + std::to_string(row) +
                          "): " + msg);
    };
    const int64_t expect_c = def.transposed ? s.out_channels : s.in_channels;
    if (x[1] != expect_c)
        throw dimension_error("module " + def.tag.str() + " (trace row " + std::to_string(row) +
                              "): channel axis has " + std::to_string(x[1]) + ", expected " +
                              std::to_string(expect_c));
    auto extent = [&](int64_t in, int k, int st, int p, const char* axis) {
        const int64_t out = def.transposed ? ops::ConvSpec::tconv_extent(in, k, st, p)
                                           : ops::ConvSpec::conv_extent(in, k, st, p);
        if (out < 1)
            throw fail(std::string("non-positive extent on ") + axis + " axis (in=" +
                       std::to_string(in) + " kernel=" + std::to_string(k) + " stride=" +
                       std::to_string(st) + " pad=" + std::to_string(p) + ")");
        return out;
    };

    H out = x;
    out[1] = def.transposed ? s.in_channels : s.out_channels;
    if (x.size() == 5) out[2] = extent(x[2], s.kt, s.st, s.pt, "time");
    out[out.size() - 2] = extent(height(x), s.kh, s.sh, s.ph, "height");
    out[out.size() - 1] = extent(width(x), s.kw, s.sw, s.pw, "width");

    const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
    const int64_t macs = (def.transposed ? numel(x) : numel(out)) * kvol * s.in_channels;
    trace.mac_total += macs;
    switch (def.tag.kind) {
        case ModuleKind::analysis:
            trace.mac_analysis += macs;
            break;
        case ModuleKind::synthesis:
            trace.mac_synthesis += macs;
            break;
        default:
            trace.mac_bp += macs;
            trace.level_stage_macs[static_cast<size_t>(def.tag.level - 1)] += macs;
            break;
    }
    note_live(bytes(x) + bytes(out));
    trace.rows.push_back(TraceRow{def.tag.str(), x, out, macs});
    return out;
}

ShapeCtx::H ShapeCtx::concat(const H& a, const H& b) const {
    if (a.size() != b.size()) throw dimension_error("concat: rank mismatch in trace");
    for (size_t i = 0; i < a.size(); ++i)
        if (i != 1 && a[i] != b[i])
            throw dimension_error("concat: axis " + std::to_string(i) + " mismatch " +
                                  Tensor::shape_str(a) + " vs " + Tensor::shape_str(b));
    H out = a;
    out[1] += b[1];
    return out;
}

ShapeCtx::H ShapeCtx::add(const H& a, const H& b) const {
    if (a != b)
        throw dimension_error("residual add: shape mismatch " + Tensor::shape_str(a) + " vs " +
                              Tensor::shape_str(b));
    return a;
}

ShapeCtx::H ShapeCtx::crop_time(const H& a, int64_t t) const {
    if (a.size() != 5) throw dimension_error("crop_time in trace requires 5D");
    if (t > a[2] || (a[2] - t) % 2 != 0)
        throw dimension_error("crop_time in trace: cannot crop " + std::to_string(a[2]) +
                              " -> " + std::to_string(t));
    H out = a;
    out[2] = t;
    return out;
}

void ShapeCtx::set_refs(const std::vector<H>& refs) {
    refs_bytes_ = 0;
    for (const auto& r : refs) refs_bytes_ += bytes(r);
    trace.refs_bytes = refs_bytes_;
}

void ShapeCtx::bp_invoked(int k, const H& u) {
    auto& inv = trace.level_bp_invocations[static_cast<size_t>(k - 1)];
    ++inv;
    if (k == 1) ++trace.leaf_bp_invocations;
    trace.level_frames[static_cast<size_t>(k - 1)] = time(u);
    trace.level_pixels[static_cast<size_t>(k - 1)] = height(u) * width(u);
}

void ShapeCtx::bp_enter(const H& u) { stack_.push_back(bytes(u)); }

void ShapeCtx::bp_exit(const H& entry, const H& exit_shape) {
    stack_.pop_back();
    trace.bp_blocks.emplace_back(entry, exit_shape);
}

void ShapeCtx::note_live(int64_t op_bytes) {
    int64_t live = refs_bytes_ + op_bytes;
    for (auto b : stack_) live += b;
    if (live > trace.peak_live_bytes) trace.peak_live_bytes = live;
}

std::string ShapeTrace::summary() const {
    std::ostringstream os;
    os << "module                          in -> out                          MACs\n";
    for (const auto& r : rows)
        os << r.module << "  " << Tensor::shape_str(r.in_shape) << " -> "
           << Tensor::shape_str(r.out_shape) << "  " << r.macs << "\n";
    os << "MAC total " << mac_total << " (analysis " << mac_analysis << ", bp " << mac_bp
       << ", synthesis " << mac_synthesis << ")\n";
    os << "level frames:";
    for (auto f : level_frames) os << " " << f;
    os << "\nlevel pixels:";
    for (auto p : level_pixels) os << " " << p;
    os << "\nleaf bp invocations: " << leaf_bp_invocations;
    os << "\nrefs bytes: " << refs_bytes << ", peak live bytes: " << peak_live_bytes << "\n";
    return os.str();
}

// --------------------------------------------------------------------------
// NetworkGraph

NetworkGraph NetworkGraph::build(const MgbpConfig& cfg, uint64_t init_seed) {
    cfg.validate();
    NetworkGraph g;
    g.cfg_ = cfg;
    for_each_module(cfg, [&](const ModuleDef& def) {
        g.module_index_[def.tag.str()] = g.modules_.size();
        g.modules_.push_back(def);
    });
    Rng rng(init_seed);
    for (const auto& def : g.modules_) {
        const auto& s = def.spec;
        const int64_t kvol = int64_t(s.kt) * s.kh * s.kw;
        std::vector<int64_t> wshape =
            cfg.dims == 3
                ? std::vector<int64_t>{s.out_channels, s.in_channels, s.kt, s.kh, s.kw}
                : std::vector<int64_t>{s.out_channels, s.in_channels, s.kh, s.kw};
        const int64_t fan_in = (def.transposed ? s.out_channels : s.in_channels) * kvol;
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        Tensor w(wshape);
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
        g.params_[def.tag.str() + ".weight"] = std::move(w);
        g.params_[def.tag.str() + ".bias"] = Tensor({def.bias_numel()});
    }
    return g;
}

const ModuleDef& NetworkGraph::module(const std::string& name) const {
    auto it = module_index_.find(name);
    if (it == module_index_.end()) throw contract_error("no module tagged '" + name + "'");
    return modules_[it->second];
}

int64_t NetworkGraph::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

uint64_t NetworkGraph::config_digest() const { return fnv1a64(cfg_.canonical()); }

Tensor NetworkGraph::make_noise(const std::vector<int64_t>& x_shape, uint64_t noise_seed,
                                double W) const {
    auto shape = x_shape;
    shape[1] = 1;
    Tensor noise(shape);
    if (W != 0.0) {
        Rng rng(noise_seed);
        for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = W * rng.normal();
    }
    return noise;
}

void NetworkGraph::check_input(const Tensor& X) const { check_image_shape(cfg_, X.shape()); }

Tensor NetworkGraph::forward(const Tensor& X, uint64_t noise_seed, double W) const {
    return forward_with_noise(X, make_noise(X.shape(), noise_seed, W));
}

Tensor NetworkGraph::forward_with_noise(const Tensor& X, const Tensor& noise) const {
    check_input(X);
    trace_shapes(X.shape());  // validates extents; errors cite the trace row
    const Tensor x = ops::concat_channels(X, noise);
    exec::EvalCtx ctx(params_);
    return run(ctx, x);
}

Tensor NetworkGraph::bp_block(const Tensor& u, const std::vector<Tensor>& refs, int k,
                              int mu) const {
    if (k < 1 || k > cfg_.levels)
        throw contract_error("bp_block: level " + std::to_string(k) + " outside [1, " +
                             std::to_string(cfg_.levels) + "]");
    if (static_cast<int>(refs.size()) != k - 1)
        throw contract_error("bp_block: expected " + std::to_string(k - 1) +
                             " reference tensors (y_1..y_{k-1}), got " +
                             std::to_string(refs.size()));
    if (mu < 1 || mu > cfg_.steps)
        throw contract_error("bp_block: mu must be in [1, " + std::to_string(cfg_.steps) + "]");
    exec::EvalCtx ctx(params_);
    std::vector<int> path(static_cast<size_t>(cfg_.levels - k), 1);
    return bp_run(ctx, u, refs, k, mu, path);
}

ShapeTrace NetworkGraph::trace_shapes(const std::vector<int64_t>& input_shape) const {
    check_image_shape(cfg_, input_shape);
    ShapeCtx ctx(cfg_);
    auto x = input_shape;
    x[1] += 1;  // noise channel
    ctx.trace.output_shape = run(ctx, x);
    return std::move(ctx.trace);
}

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

constexpr char kCkptMagic[8] = {'M', 'G', 'B', 'P', 'C', 'K', 'P', 'T'};

}  // namespace

void NetworkGraph::save_checkpoint(const std::string& path) const {
    std::string buf;
    buf.append(kCkptMagic, 8);
    put_u64(buf, config_digest());
    for (const auto& [name, t] : params_) {
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf.append(name);
        write_mgbt_stream(t, buf, MgbtDtype::f64);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw io_error("failed writing " + path);
}

void NetworkGraph::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), kCkptMagic, 8) != 0)
        throw io_error(path + " is not an MGBPCKPT checkpoint");
    uint64_t digest = 0;
    for (int i = 0; i < 8; ++i)
        digest |= static_cast<uint64_t>(static_cast<uint8_t>(buf[8 + i])) << (8 * i);
    if (digest != config_digest())
        throw io_error("checkpoint config digest mismatch: file was saved for a different "
                       "network configuration");
    size_t off = 16;
    std::map<std::string, Tensor> loaded;
    const auto* bytes = reinterpret_cast<const uint8_t*>(buf.data());
    while (off < buf.size()) {
        if (off + 4 > buf.size()) throw io_error("truncated checkpoint entry header");
        uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= static_cast<uint32_t>(bytes[off + i]) << (8 * i);
        off += 4;
        if (off + len > buf.size()) throw io_error("truncated checkpoint tag string");
        std::string name(buf, off, len);
        off += len;
        loaded[name] = read_mgbt_stream(bytes, buf.size(), off);
    }
    if (loaded.size() != params_.size())
        throw io_error("checkpoint holds " + std::to_string(loaded.size()) +
                       " tensors, network has " + std::to_string(params_.size()));
    for (auto& [name, t] : loaded) {
        auto it = params_.find(name);
        if (it == params_.end()) throw io_error("checkpoint tensor '" + name + "' is not a tag");
        if (!it->second.same_shape(t))
            throw io_error("checkpoint tensor '" + name + "' has shape " + t.shape_str() +
                           ", expected " + it->second.shape_str());
        it->second = std::move(t);
    }
}

// --------------------------------------------------------------------------
// Classic IBP

IbpResult ibp_classic(const Tensor& x, const IbpOperator& R, const IbpOperator& P,
                      const Tensor& y0, int iters) {
    if (iters < 0) throw contract_error("ibp_classic: iters must be >= 0");
    IbpResult res;
    res.y = y0;
    Tensor rx = R.apply(y0);
    if (!rx.same_shape(x))
        throw dimension_error("ibp_classic: R(y0) has shape " + rx.shape_str() +
                              " but x has shape " + x.shape_str());
    for (int k = 0;; ++k) {
        const Tensor e = ops::sub(x, R.apply(res.y));
        res.residual_norms.push_back(std::sqrt(ops::dot(e, e)));
        if (k == iters) break;
        res.y = ops::add(res.y, P.apply(e));
    }
    return res;
}

}  // namespace mgbp
