#include "mgbp/trainer.hpp"

#include <cmath>
#include <iostream>

#include "mgbp/metrics.hpp"
#include "mgbp/ops.hpp"

namespace mgbp::trainer {

namespace a = mgbp::autograd;

void TrainConfig::validate(int factor) const {
    if (batch < 1) throw config_error("batch size must be >= 1");
    if (patch_size(factor) % factor != 0)
        throw config_error("patch size " + std::to_string(patch_size(factor)) +
                           " must be divisible by the factor " + std::to_string(factor));
    if (lr <= 0.0) throw config_error("learning rate must be > 0");
    if (lr_halve_every < 1) throw config_error("lr halving interval must be >= 1");
    if (max_steps < 1) throw config_error("max_steps must be >= 1");
    if (validate_every < 1) throw config_error("validate_every must be >= 1");
    if (noise_amplitude < 0.0) throw config_error("noise amplitude must be >= 0");
}

double lr_at(const TrainConfig& cfg, int64_t step) {
    return cfg.lr * std::pow(2.0, -static_cast<double>(step / cfg.lr_halve_every));
}

void adam_step(std::map<std::string, Tensor>& params, const autograd::GradientMap& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        if (!g.same_shape(p))
            throw dimension_error("adam_step: gradient for '" + name + "' has shape " +
                                  g.shape_str() + ", parameter is " + p.shape_str());
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m = Tensor(p.shape());
        if (v.empty()) v = Tensor(p.shape());
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t step, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (step + 1) + salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Tensor flip_axis(const Tensor& x, bool horizontal) {
    Tensor y(x.shape());
    const int64_t bc = x.batch() * x.channels() * x.time();
    const int64_t h = x.height(), w = x.width();
    for (int64_t s = 0; s < bc; ++s)
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const int64_t si = horizontal ? i : h - 1 - i;
                const int64_t sj = horizontal ? w - 1 - j : j;
                y[(s * h + i) * w + j] = x[(s * h + si) * w + sj];
            }
    return y;
}

Tensor rotate90(const Tensor& x) {
    if (x.height() != x.width()) throw dimension_error("rotate90 requires square patches");
    Tensor y(x.shape());
    const int64_t bc = x.batch() * x.channels() * x.time();
    const int64_t n = x.height();
    for (int64_t s = 0; s < bc; ++s)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) y[(s * n + i) * n + j] = x[(s * n + j) * n + (n - 1 - i)];
    return y;
}

std::vector<size_t> eligible_images(const Dataset& data, int64_t patch, bool warn) {
    if (data.images.empty()) throw config_error("dataset is empty");
    std::vector<size_t> idx;
    for (size_t i = 0; i < data.images.size(); ++i) {
        const Tensor& img = data.images[i];
        if (img.height() >= patch && img.width() >= patch) {
            idx.push_back(i);
        } else if (warn) {
            std::cerr << "warning: image " << i << " (" << img.shape_str()
                      << ") is smaller than the " << patch << "-pixel patch; skipped\n";
        }
    }
    if (idx.empty())
        throw config_error("no dataset image is at least " + std::to_string(patch) + "x" +
                           std::to_string(patch));
    return idx;
}

Tensor impair(const Tensor& hr, int factor) {
    return ops::bicubic_resize(ops::bicubic_resize(hr, factor, ops::ResizeDir::down), factor,
                               ops::ResizeDir::up);
}

void paste_item(Tensor& batch, int64_t item, const Tensor& patch) {
    const int64_t inner = patch.numel();
    std::copy(patch.data(), patch.data() + inner, batch.data() + item * inner);
}

}  // namespace

Batch sample_patches(const Dataset& data, const TrainConfig& cfg, int factor, Rng& rng) {
    cfg.validate(factor);
    const int64_t patch = cfg.patch_size(factor);
    static thread_local bool warned = false;
    const auto idx = eligible_images(data, patch, !warned);
    warned = true;

    const int64_t c = data.images.front().channels();
    Batch out;
    out.input = Tensor({cfg.batch, c, patch, patch});
    out.target = Tensor({cfg.batch, c, patch, patch});
    for (int b = 0; b < cfg.batch; ++b) {
        const Tensor& img = data.images[idx[static_cast<size_t>(rng.below(
            static_cast<int64_t>(idx.size())))]];
        const int64_t ymax = (img.height() - patch) / factor;
        const int64_t xmax = (img.width() - patch) / factor;
        const int64_t y0 = rng.below(ymax + 1) * factor;
        const int64_t x0 = rng.below(xmax + 1) * factor;
        Tensor hr = ops::crop_spatial(img, 0, img.time(), y0, y0 + patch, x0, x0 + patch);
        if (cfg.flip_h && rng.coin()) hr = flip_axis(hr, true);
        if (cfg.flip_v && rng.coin()) hr = flip_axis(hr, false);
        if (cfg.rot90 && rng.coin()) hr = rotate90(hr);
        paste_item(out.target, b, hr);
        paste_item(out.input, b, impair(hr, factor));
    }
    return out;
}

namespace {

// Fixed validation set: patches drawn from a dedicated generator seeded once,
// so every validation pass scores the same data.
Batch validation_batch(const Dataset& data, const TrainConfig& cfg, int factor) {
    TrainConfig vcfg = cfg;
    vcfg.flip_h = vcfg.flip_v = vcfg.rot90 = false;
    Rng rng(cfg.seed ^ 0x5DEECE66Dull);
    return sample_patches(data, vcfg, factor, rng);
}

autograd::LeafMap register_params(a::Tape& tape, const std::map<std::string, Tensor>& params,
                                  const std::string& prefix) {
    autograd::LeafMap leaves;
    for (const auto& [name, value] : params) leaves[prefix + name] = tape.leaf(value, prefix + name);
    return leaves;
}

void emit(const LogSink& log, int64_t step, double lr,
          std::vector<std::pair<std::string, double>> losses) {
    if (!log) return;
    StepLog entry;
    entry.step = step;
    entry.lr = lr;
    entry.losses = std::move(losses);
    log(entry);
}

void maybe_record(Checkpoint& best, const NetworkGraph& gen, int64_t step, double value,
                  TrainConfig::Mode mode) {
    if (value < best.validation) {  // strict improvement only
        best.step = step;
        best.validation = value;
        best.params = gen.params();
        best.mode = mode;
    }
}

}  // namespace

Checkpoint train_fidelity(NetworkGraph& gen, const Dataset& data, const TrainConfig& cfg,
                          const LogSink& log, const ValidationHook& validation) {
    const int factor = gen.config().factor;
    cfg.validate(factor);
    const Batch val = validation_batch(data, cfg, factor);
    auto validate = [&](const NetworkGraph& g) {
        if (validation) return validation(g);
        const Tensor y = g.forward(val.input, 0, 0.0);
        const double r = metrics::rmse(y, val.target);
        return r * r;  // mean squared error, the L2 validation metric
    };

    Rng data_rng(cfg.seed);
    AdamState state;
    Checkpoint best;
    for (int64_t step = 0; step < cfg.max_steps; ++step) {
        const Batch batch = sample_patches(data, cfg, factor, data_rng);
        a::Tape tape;
        const auto leaves = register_params(tape, gen.params(), "");
        exec::TapeCtx ctx(tape, leaves);
        const auto x = tape.concat_channels(
            tape.leaf(batch.input),
            tape.leaf(gen.make_noise(batch.input.shape(), 0, 0.0)));
        const auto y0 = gen.run(ctx, x);
        const auto loss =
            perceptual::high_fidelity_loss_t(ctx, y0, tape.leaf(batch.target), factor);
        const double loss_value = tape.value(loss)[0];
        const auto grads = tape.backward(loss, Tensor::scalar(1.0));
        adam_step(gen.params(), grads, state, lr_at(cfg, step));
        emit(log, step, lr_at(cfg, step), {{"high_fidelity", loss_value}});
        if ((step + 1) % cfg.validate_every == 0 || step + 1 == cfg.max_steps)
            maybe_record(best, gen, step, validate(gen), TrainConfig::Mode::fidelity);
    }
    return best;
}

Checkpoint train_perceptual(NetworkGraph& gen, perceptual::DiscriminatorGraph& disc,
                            const Dataset& data, const TrainConfig& cfg,
                            const perceptual::LossWeights& weights, const LogSink& log,
                            const ValidationHook& validation) {
    const int factor = gen.config().factor;
    cfg.validate(factor);
    weights.validate();
    const Batch val = validation_batch(data, cfg, factor);
    auto validate = [&](const NetworkGraph& g) {
        if (validation) return validation(g);
        // NIQE stand-in: distortion at W=0 plus the raw VN statistic at W=1.
        const Tensor y0 = g.forward(val.input, 0, 0.0);
        const Tensor y1 = g.forward(val.input, 1, cfg.noise_amplitude);
        const Tensor vn = perceptual::variance_normalize(perceptual::luminance_bt609(y1));
        double vn_abs = 0.0;
        for (int64_t i = 0; i < vn.numel(); ++i) vn_abs += std::fabs(vn[i]);
        return metrics::rmse(y0, val.target) + vn_abs / static_cast<double>(vn.numel());
    };

    Rng data_rng(cfg.seed);
    AdamState gen_state, disc_state;
    Checkpoint best;
    for (int64_t step = 0; step < cfg.max_steps; ++step) {
        const Batch batch = sample_patches(data, cfg, factor, data_rng);
        const double lr = lr_at(cfg, step);
        double d_loss_value = 0.0;

        // --- discriminator step (generator frozen) ---
        {
            const Tensor y1 = gen.forward(batch.input, mix_seed(cfg.seed, step, 1),
                                          cfg.noise_amplitude);
            a::Tape tape;
            const auto leaves = register_params(tape, disc.params(), "");
            exec::TapeCtx ctx(tape, leaves);
            const auto fake = perceptual::multiscale_pyramid(ctx, tape.leaf(y1),
                                                             disc.config().scales);
            const auto real = perceptual::multiscale_pyramid(ctx, tape.leaf(batch.target),
                                                             disc.config().scales);
            const auto c_fake = disc.run(ctx, fake);
            const auto c_real = disc.run(ctx, real);
            const auto losses = perceptual::rsgan_losses_t(ctx, c_real, c_fake);
            d_loss_value = tape.value(losses.first)[0];
            const auto grads = tape.backward(losses.first, Tensor::scalar(1.0));
            adam_step(disc.params(), grads, disc_state, lr);
        }

        // --- generator step (discriminator params on tape, gradients discarded) ---
        {
            a::Tape tape;
            auto leaves = register_params(tape, gen.params(), "gen/");
            const auto disc_leaves = register_params(tape, disc.params(), "disc/");
            leaves.insert(disc_leaves.begin(), disc_leaves.end());
            exec::TapeCtx gen_ctx(tape, leaves, "gen/");
            const auto input_leaf = tape.leaf(batch.input);
            const auto y1 = gen.run(
                gen_ctx, tape.concat_channels(
                             input_leaf, tape.leaf(gen.make_noise(
                                             batch.input.shape(), mix_seed(cfg.seed, step, 2),
                                             cfg.noise_amplitude))));
            const auto y0 = gen.run(
                gen_ctx, tape.concat_channels(
                             input_leaf, tape.leaf(gen.make_noise(batch.input.shape(), 0, 0.0))));
            exec::TapeCtx disc_ctx(tape, leaves, "disc/");
            const auto loss = perceptual::total_perceptual_loss_t(
                disc_ctx, y1, y0, tape.leaf(batch.target), disc, weights, factor);
            const double loss_value = tape.value(loss)[0];
            const auto grads = tape.backward(loss, Tensor::scalar(1.0));
            autograd::GradientMap gen_grads;
            for (const auto& [name, g] : grads.grads)
                if (name.rfind("gen/", 0) == 0) gen_grads.grads[name.substr(4)] = g;
            adam_step(gen.params(), gen_grads, gen_state, lr);
            emit(log, step, lr, {{"rsgan_d", d_loss_value}, {"total_perceptual", loss_value}});
        }

        if ((step + 1) % cfg.validate_every == 0 || step + 1 == cfg.max_steps)
            maybe_record(best, gen, step, validate(gen), TrainConfig::Mode::perceptual);
    }
    return best;
}

}  // namespace mgbp::trainer
