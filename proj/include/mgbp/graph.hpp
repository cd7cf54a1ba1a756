#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mgbp/exec.hpp"
#include "mgbp/modules.hpp"
#include "mgbp/tensor.hpp"

namespace mgbp {

struct TraceRow {
    std::string module;
    std::vector<int64_t> in_shape;
    std::vector<int64_t> out_shape;
    int64_t macs = 0;
};

// Shape listing of one unfolded execution, plus the exact cost/memory
// accounting derived from it. Costs count conv/transposed-conv
// multiply-accumulates only (kernel volume x channels x output elements,
// padding ignored); activation bytes assume 8-byte doubles.
struct ShapeTrace {
    std::vector<TraceRow> rows;
    std::vector<std::pair<std::vector<int64_t>, std::vector<int64_t>>> bp_blocks;  // entry/exit
    std::vector<int64_t> level_frames;       // temporal extent seen at level k (index k-1)
    std::vector<int64_t> level_pixels;       // spatial H*W at level k
    std::vector<int64_t> level_stage_macs;   // down+up MACs of stages at level k
    std::vector<int64_t> level_bp_invocations;
    int64_t leaf_bp_invocations = 0;
    int64_t mac_total = 0, mac_bp = 0, mac_analysis = 0, mac_synthesis = 0;
    int64_t refs_bytes = 0;
    int64_t peak_live_bytes = 0;
    std::vector<int64_t> output_shape;

    double volume_saving() const {
        if (level_frames.empty() || level_frames.back() == 0) return 0.0;
        const double top = static_cast<double>(level_frames.back());
        return (top - static_cast<double>(level_frames.front())) / top;
    }
    std::string summary() const;
};

// Shape-only execution context: predicts every module's output shape
// independently of the tensor kernels and accumulates cost counters.
class ShapeCtx {
public:
    using H = std::vector<int64_t>;

    explicit ShapeCtx(const MgbpConfig& cfg) : dims_(cfg.dims) {
        trace.level_frames.assign(static_cast<size_t>(cfg.levels), 0);
        trace.level_pixels.assign(static_cast<size_t>(cfg.levels), 0);
        trace.level_stage_macs.assign(static_cast<size_t>(cfg.levels), 0);
        trace.level_bp_invocations.assign(static_cast<size_t>(cfg.levels), 0);
    }

    ShapeTrace trace;

    H module_conv(const H& x, const ModuleDef& def);
    H relu(const H& x) const { return x; }
    H concat(const H& a, const H& b) const;
    H add(const H& a, const H& b) const;
    H crop_time(const H& a, int64_t t) const;

    int64_t time(const H& a) const { return a.size() == 5 ? a[2] : 1; }
    int64_t channels(const H& a) const { return a[1]; }
    int64_t height(const H& a) const { return a[a.size() - 2]; }
    int64_t width(const H& a) const { return a[a.size() - 1]; }

    void set_refs(const std::vector<H>& refs);
    void bp_invoked(int k, const H& u);
    void bp_enter(const H& u);
    void bp_exit(const H& entry, const H& exit_shape);

private:
    static int64_t numel(const H& s) {
        int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }
    static int64_t bytes(const H& s) { return numel(s) * 8; }
    void note_live(int64_t op_bytes);

    int dims_;
    std::vector<int64_t> stack_;
    int64_t refs_bytes_ = 0;
};

// The unfolded generator: tagged module table (dry-run order) plus the
// parameter store keyed by tag.
class NetworkGraph {
public:
    NetworkGraph() = default;

    // Instantiates every module by a dry run of the cycle and initializes
    // parameters (fan-in-scaled uniform weights, zero biases), deterministically
    // from the seed.
    static NetworkGraph build(const MgbpConfig& cfg, uint64_t init_seed);

    const MgbpConfig& config() const { return cfg_; }
    const std::vector<ModuleDef>& modules() const { return modules_; }
    const ModuleDef& module(const std::string& name) const;
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    int64_t parameter_count() const;
    uint64_t config_digest() const;

    // Noise field at the resolution of X (single channel), scaled by W. The
    // field depends only on the seed, so sweeping W keeps it fixed; W=0 is
    // exactly zero.
    Tensor make_noise(const std::vector<int64_t>& x_shape, uint64_t noise_seed, double W) const;

    // X must be the bicubic-upscaled input at output resolution.
    Tensor forward(const Tensor& X, uint64_t noise_seed, double W) const;
    Tensor forward_with_noise(const Tensor& X, const Tensor& noise) const;

    // One back-projection block at level k (refs are y_1..y_{k-1}).
    Tensor bp_block(const Tensor& u, const std::vector<Tensor>& refs, int k, int mu) const;

    ShapeTrace trace_shapes(const std::vector<int64_t>& input_shape) const;

    // Checkpoint format: "MGBPCKPT", config digest u64 LE, then repeated
    // (u32 tag length, tag string, MGBT tensor).
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    // --- templated execution over a context; x is already [X, noise] ---
    template <class Ctx>
    typename Ctx::H run(Ctx& ctx, const typename Ctx::H& x) const {
        using H = typename Ctx::H;
        std::vector<H> refs;
        refs.reserve(static_cast<size_t>(cfg_.levels));
        for (int k = 1; k <= cfg_.levels; ++k)
            refs.push_back(ctx.module_conv(x, module(ModuleTag{ModuleKind::analysis, k, {}}.str())));
        ctx.set_refs(refs);
        std::vector<int> path;
        H y = bp_run(ctx, refs.back(), refs, cfg_.levels, cfg_.steps, path);
        return ctx.module_conv(y, module("synthesis"));
    }

    template <class Ctx>
    typename Ctx::H bp_run(Ctx& ctx, const typename Ctx::H& u,
                           const std::vector<typename Ctx::H>& refs, int k, int mu,
                           std::vector<int>& path) const {
        using H = typename Ctx::H;
        ctx.bp_invoked(k, u);
        if (k <= 1) return u;
        H out = u;
        ctx.bp_enter(out);
        for (int s = 1; s <= mu; ++s) {
            path.push_back(s);
            const H lr = ctx.module_conv(out, module(ModuleTag{ModuleKind::downscale, k, path}.str()));
            const H c = bp_run(ctx, lr, refs, k - 1, mu, path);
            H ref = refs[static_cast<size_t>(k - 2)];
            if (ctx.time(ref) != ctx.time(c)) ref = ctx.crop_time(ref, ctx.time(c));
            const H cat = ctx.concat(ref, c);
            const H up = ctx.module_conv(ctx.relu(cat),
                                         module(ModuleTag{ModuleKind::upscale, k, path}.str()));
            out = ctx.add(out, up);
            path.pop_back();
        }
        ctx.bp_exit(u, out);
        return out;
    }

private:
    MgbpConfig cfg_;
    std::vector<ModuleDef> modules_;
    std::map<std::string, size_t> module_index_;
    std::map<std::string, Tensor> params_;

    void check_input(const Tensor& X) const;
};

// Classic iterative back-projection over explicit linear restriction /
// projection operators: e_k = x - R(y_k), y_{k+1} = y_k + P(e_k).
struct IbpOperator {
    ops::ConvSpec spec;
    Tensor weights;
    bool transposed = false;

    Tensor apply(const Tensor& v) const {
        return transposed ? ops::conv_transposed(v, weights, Tensor(), spec)
                          : ops::conv(v, weights, Tensor(), spec);
    }
};

struct IbpResult {
    Tensor y;
    std::vector<double> residual_norms;  // ||x - R(y_k)||_2 for k = 0..iters
};

IbpResult ibp_classic(const Tensor& x, const IbpOperator& R, const IbpOperator& P,
                      const Tensor& y0, int iters);

}  // namespace mgbp
