#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgbp/graph.hpp"

namespace mgbp::complexity {

// Per-level cost model for the recurrence p(n) = f(n) + mu * p(n/4):
// f is either analytic (constant or c*n^alpha) or calibrated from counted
// per-level costs. n shrinks by integer division when not divisible by 4.
struct CostModel {
    enum class FKind { constant, power, calibrated };
    FKind kind = FKind::power;
    double c = 1.0;
    double alpha = 0.5;
    int mu = 2;
    int levels = 2;
    int64_t base_pixels = 0;            // n at the finest level
    std::vector<int64_t> per_level_f;   // calibrated: index k-1 = per-invocation cost of level k
};

// Exact unroll of the finite recurrence: sum over j of mu^j * f(n / 4^j),
// j = 0..levels-1 (the lowest level contributes its own f as the base case).
double recurrence_cost(const CostModel& model);

// Integer unroll used by the calibrated comparison: p_1 = f_1,
// p_k = f_k + mu * p_{k-1}; returns p_L.
int64_t recurrence_cost_exact(const std::vector<int64_t>& per_level_f, int mu);

struct CostReport {
    int64_t mac_total = 0, mac_bp = 0, mac_analysis = 0, mac_synthesis = 0;
    int64_t peak_activation_bytes = 0;
    int64_t refs_bytes = 0;               // one feature-map copy per level
    int64_t full_res_feature_bytes = 0;   // the finest level's feature map
    std::vector<int64_t> level_stage_macs;
    std::vector<int64_t> level_bp_invocations;
    std::vector<int64_t> level_pixels;
    std::vector<int64_t> per_level_f;     // per-invocation BP body cost (0 at the leaf level)

    std::string text() const;
};

// Exact operation/memory counts of one unfolded execution (conv and
// transposed-conv multiply-accumulates; relu/concat free).
CostReport count_ops(const NetworkGraph& g, const std::vector<int64_t>& input_shape);

struct CompareResult {
    CostModel model;          // calibrated from the counts
    int64_t counted_bp = 0;   // counted BP-body MACs
    int64_t predicted = 0;    // recurrence evaluated with the calibrated f
    double rel_gap = 0.0;     // |predicted - counted| / counted
    double fitted_exponent = 0.0;  // least-squares slope of log f_k vs log n_k
    bool sublinear_half = false;   // fitted exponent < 1/2
    CostReport report;
};

// Calibrates f per level from the counted per-level costs, re-evaluates the
// recurrence, and fits the per-level cost exponent of the channel schedule.
CompareResult compare(const NetworkGraph& g, const std::vector<int64_t>& input_shape);

// Gap between an analytic model and the counted BP-body MACs.
double relative_gap(const CostModel& model, const NetworkGraph& g,
                    const std::vector<int64_t>& input_shape);

}  // namespace mgbp::complexity
