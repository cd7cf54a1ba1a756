#include "mgbp/complexity.hpp"

#include <cmath>
#include <sstream>

namespace mgbp::complexity {

double recurrence_cost(const CostModel& model) {
    if (model.kind == CostModel::FKind::calibrated)
        return static_cast<double>(recurrence_cost_exact(model.per_level_f, model.mu));
    if (model.c <= 0.0) throw config_error("cost model coefficient must be > 0");
    if (model.alpha < 0.0) throw config_error("cost model exponent must be >= 0");
    double total = 0.0;
    double weight = 1.0;
    int64_t n = model.base_pixels;
    for (int j = 0; j < model.levels; ++j) {
        const double f = model.kind == CostModel::FKind::constant
                             ? model.c
                             : model.c * std::pow(static_cast<double>(n), model.alpha);
        total += weight * f;
        weight *= static_cast<double>(model.mu);
        n /= 4;
    }
    return total;
}

int64_t recurrence_cost_exact(const std::vector<int64_t>& per_level_f, int mu) {
    if (per_level_f.empty()) return 0;
    int64_t p = per_level_f.front();  // level 1
    for (size_t k = 1; k < per_level_f.size(); ++k) p = per_level_f[k] + mu * p;
    return p;
}

namespace {

std::vector<int64_t> calibrate(const ShapeTrace& trace) {
    std::vector<int64_t> f(trace.level_stage_macs.size(), 0);
    for (size_t i = 1; i < f.size(); ++i) {
        const int64_t macs = trace.level_stage_macs[i];
        const int64_t inv = trace.level_bp_invocations[i];
        if (inv == 0) continue;
        if (macs % inv != 0)
            throw state_error("per-level stage cost is not divisible by the invocation count");
        f[i] = macs / inv;
    }
    return f;
}

}  // namespace

CostReport count_ops(const NetworkGraph& g, const std::vector<int64_t>& input_shape) {
    const ShapeTrace trace = g.trace_shapes(input_shape);
    CostReport r;
    r.mac_total = trace.mac_total;
    r.mac_bp = trace.mac_bp;
    r.mac_analysis = trace.mac_analysis;
    r.mac_synthesis = trace.mac_synthesis;
    r.peak_activation_bytes = trace.peak_live_bytes;
    r.refs_bytes = trace.refs_bytes;
    r.level_stage_macs = trace.level_stage_macs;
    r.level_bp_invocations = trace.level_bp_invocations;
    r.level_pixels = trace.level_pixels;
    r.per_level_f = calibrate(trace);
    // the finest level's feature map is the last analysis row
    const int L = g.config().levels;
    int64_t numel = 1;
    for (auto d : trace.rows[static_cast<size_t>(L - 1)].out_shape) numel *= d;
    r.full_res_feature_bytes = numel * 8;
    return r;
}

CompareResult compare(const NetworkGraph& g, const std::vector<int64_t>& input_shape) {
    CompareResult res;
    res.report = count_ops(g, input_shape);
    res.model.kind = CostModel::FKind::calibrated;
    res.model.mu = g.config().steps;
    res.model.levels = g.config().levels;
    res.model.per_level_f = res.report.per_level_f;
    res.model.base_pixels = res.report.level_pixels.empty() ? 0 : res.report.level_pixels.back();
    res.counted_bp = res.report.mac_bp;
    res.predicted = recurrence_cost_exact(res.model.per_level_f, res.model.mu);
    res.rel_gap = res.counted_bp == 0
                      ? 0.0
                      : std::fabs(static_cast<double>(res.predicted - res.counted_bp)) /
                            static_cast<double>(res.counted_bp);

    // Fit log f_k = alpha * log n_k + const over the levels that do BP work.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 1; i < res.report.per_level_f.size(); ++i) {
        if (res.report.per_level_f[i] <= 0 || res.report.level_pixels[i] <= 0) continue;
        const double x = std::log(static_cast<double>(res.report.level_pixels[i]));
        const double y = std::log(static_cast<double>(res.report.per_level_f[i]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n >= 2 && sxx * n - sx * sx != 0.0)
        res.fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    res.sublinear_half = res.fitted_exponent < 0.5;
    return res;
}

double relative_gap(const CostModel& model, const NetworkGraph& g,
                    const std::vector<int64_t>& input_shape) {
    const CostReport r = count_ops(g, input_shape);
    if (r.mac_bp == 0) return 0.0;
    return std::fabs(recurrence_cost(model) - static_cast<double>(r.mac_bp)) /
           static_cast<double>(r.mac_bp);
}

std::string CostReport::text() const {
    std::ostringstream os;
    os << "MAC total:      " << mac_total << "\n"
       << "  analysis:     " << mac_analysis << "\n"
       << "  bp body:      " << mac_bp << "\n"
       << "  synthesis:    " << mac_synthesis << "\n"
       << "peak activation bytes: " << peak_activation_bytes << "\n"
       << "per-level feature-map bytes (sum): " << refs_bytes << "\n"
       << "finest-level feature-map bytes:    " << full_res_feature_bytes << "\n";
    os << "level  pixels        bp-invocations  stage-MACs      f (per invocation)\n";
    for (size_t i = 0; i < level_stage_macs.size(); ++i)
        os << "  " << (i + 1) << "    " << level_pixels[i] << "  " << level_bp_invocations[i]
           << "  " << level_stage_macs[i] << "  " << per_level_f[i] << "\n";
    return os.str();
}

}  // namespace mgbp::complexity
