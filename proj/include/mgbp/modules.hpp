#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mgbp/ops.hpp"

namespace mgbp {

// Generator configuration. `channels[k-1]` is the feature count of level k,
// where level 1 is the coarsest grid and level `levels` runs at full
// resolution; the list therefore reads coarse-to-fine, with the large counts
// at the low-resolution levels. Level-to-level rescaling is a fixed 2x2
// (stride-2 stages), so spatial input extents must be divisible by
// 2^(levels-1). Temporal stride is always 1; `temporal_kernels[j]` is the
// time kernel of stage j, where stage 0 is the transition from the finest
// level down to the next one.
struct MgbpConfig {
    int dims = 2;  // 2 = images, 3 = spatio-temporal cubes
    int factor = 4;
    int levels = 4;
    int steps = 4;  // mu
    std::vector<int64_t> channels;
    int image_channels = 3;
    double noise_amplitude = 1.0;

    int stage_kernel = 4, stage_stride = 2, stage_pad = 1;
    std::vector<int> temporal_kernels;  // size levels-1; all 1 for 2D
    bool temporal_padding = false;
    int analysis_temporal_kernel = 1;

    void validate() const;

    // Paper-table presets: image factors {2,3,4,8,16}, video factors {4,16}.
    static MgbpConfig image_preset(int factor);
    static MgbpConfig video_preset(int factor);
    // Small config for quick gradient checks and demos.
    static MgbpConfig toy();

    int64_t channels_at_level(int k) const { return channels[static_cast<size_t>(k - 1)]; }
    int temporal_kernel_of_stage(int upper_level) const {
        // stage index 0 corresponds to upper_level == levels
        return temporal_kernels.empty()
                   ? 1
                   : temporal_kernels[static_cast<size_t>(levels - upper_level)];
    }
    std::string channels_str() const;
    std::string canonical() const;  // stable serialization used for the digest
};

enum class ModuleKind { analysis, synthesis, downscale, upscale };

// Identity of one parameterized module in the unfolded network. Downscalers
// and upscalers carry the step path from the outermost cycle down to their
// own level (the live tag vector at the moment of use), which is what makes
// every instance distinct.
struct ModuleTag {
    ModuleKind kind;
    int level = 0;
    std::vector<int> steps;

    std::string str() const;
};

struct ModuleDef {
    ModuleTag tag;
    ops::ConvSpec spec;
    bool transposed = false;
    bool relu_before = false;

    int64_t weight_numel(int dims) const {
        const int64_t kvol = (dims == 3 ? spec.kt : 1) * int64_t(spec.kh) * spec.kw;
        return spec.out_channels * spec.in_channels * kvol;
    }
    int64_t bias_numel() const { return transposed ? spec.in_channels : spec.out_channels; }
};

// Dry run of the cycle: enumerates every module in first-use order
// (analysis 1..L, then down/up pairs in execution order, then synthesis).
void for_each_module(const MgbpConfig& cfg, const std::function<void(const ModuleDef&)>& fn);

}  // namespace mgbp
