#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mgbp/autograd.hpp"
#include "mgbp/graph.hpp"
#include "mgbp/perceptual.hpp"
#include "mgbp/rng.hpp"
#include "mgbp/tensor.hpp"

namespace mgbp::trainer {

struct TrainConfig {
    enum class Mode { fidelity, perceptual };

    int batch = 16;
    int64_t patch = -1;  // -1 -> 48 * factor
    double lr = 1e-4;
    int64_t lr_halve_every = 200000;
    uint64_t seed = 0;
    int64_t max_steps = 1000;
    bool flip_h = true, flip_v = true, rot90 = true;
    Mode mode = Mode::fidelity;
    int64_t validate_every = 50;
    double noise_amplitude = 1.0;  // W for the perceptual forwards

    int64_t patch_size(int factor) const { return patch > 0 ? patch : 48ll * factor; }
    void validate(int factor) const;
};

// lr(step) = lr * 2^-floor(step / halve_every)
double lr_at(const TrainConfig& cfg, int64_t step);

struct AdamState {
    std::map<std::string, Tensor> m, v;
    int64_t t = 0;
};

// Standard Adam with bias correction.
void adam_step(std::map<std::string, Tensor>& params, const autograd::GradientMap& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// High-resolution ground-truth images, each (1, C, H, W) in [0, 255].
struct Dataset {
    std::vector<Tensor> images;
};

struct Batch {
    Tensor input;   // bicubic-down-then-up impaired patches
    Tensor target;  // aligned HR patches
};

// Aligned crops with identical augmentation on both members of each pair:
// the HR patch is cropped (factor-aligned offsets) and augmented, then the
// impaired input is constructed from it by S_f down followed by S_f up.
// Images smaller than the patch are skipped with a warning; if everything is
// skipped the dataset is unusable.
Batch sample_patches(const Dataset& data, const TrainConfig& cfg, int factor, Rng& rng);

struct StepLog {
    int64_t step = 0;
    double lr = 0.0;
    std::vector<std::pair<std::string, double>> losses;
};
using LogSink = std::function<void(const StepLog&)>;
using ValidationHook = std::function<double(const NetworkGraph&)>;

struct Checkpoint {
    int64_t step = -1;
    std::map<std::string, Tensor> params;  // generator snapshot
    double validation = std::numeric_limits<double>::infinity();
    TrainConfig::Mode mode = TrainConfig::Mode::fidelity;
};

// Minimizes the high-fidelity loss at W=0; validates with mean L2 on a fixed
// deterministic patch set and returns the best (strictly improving)
// checkpoint. Fully seeded: identical seeds give identical runs.
Checkpoint train_fidelity(NetworkGraph& gen, const Dataset& data, const TrainConfig& cfg,
                          const LogSink& log = {}, const ValidationHook& validation = {});

// Alternating relativistic-GAN training (one discriminator step, one
// generator step). Each generator step runs both the W=1 and W=0 forwards as
// the total loss requires. The default validation is a documented stand-in
// for the paper's no-reference index: RMSE at W=0 plus the mean |VN|
// statistic at W=1.
Checkpoint train_perceptual(NetworkGraph& gen, perceptual::DiscriminatorGraph& disc,
                            const Dataset& data, const TrainConfig& cfg,
                            const perceptual::LossWeights& weights, const LogSink& log = {},
                            const ValidationHook& validation = {});

}  // namespace mgbp::trainer
