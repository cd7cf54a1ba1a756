#include <doctest.h>

#include <cmath>

#include "mgbp/trainer.hpp"
#include "test_helpers.hpp"

using namespace mgbp;
using namespace mgbp::trainer;
using testutil::random_tensor;

namespace {

MgbpConfig tiny_model() {
    MgbpConfig cfg;
    cfg.levels = 2;
    cfg.factor = 2;
    cfg.steps = 2;
    cfg.channels = {8, 6};
    cfg.temporal_kernels = {1};
    return cfg;
}

Dataset tiny_dataset(uint64_t seed, int64_t n = 48) {
    Rng rng(seed);
    Dataset d;
    d.images.push_back(random_tensor({1, 3, n, n}, rng, 0.0, 255.0));
    return d;
}

TrainConfig tiny_train(uint64_t seed, int64_t steps) {
    TrainConfig cfg;
    cfg.batch = 2;
    cfg.patch = 16;
    cfg.max_steps = steps;
    cfg.validate_every = std::max<int64_t>(1, steps / 2);
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("adam: quadratic descent matches an independent scalar recursion") {
    // oracle: run the textbook update on f(w) = w^2 by hand
    double w = 1.0, m = 0.0, v = 0.0;
    const double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> oracle_track;
    for (int t = 1; t <= 600; ++t) {
        const double g = 2.0 * w;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);
        oracle_track.push_back(w);
    }
    CHECK(std::fabs(w) < 1e-2);

    // the implementation follows the same trajectory
    std::map<std::string, Tensor> params{{"w", Tensor::scalar(1.0)}};
    AdamState state;
    for (int t = 0; t < 600; ++t) {
        autograd::GradientMap gm;
        gm.grads["w"] = Tensor::scalar(2.0 * params.at("w")[0]);
        adam_step(params, gm, state, lr);
        CHECK(params.at("w")[0] ==
              doctest::Approx(oracle_track[static_cast<size_t>(t)]).epsilon(1e-12));
    }
}

TEST_CASE("adam: zero gradient leaves parameters fixed while moments decay") {
    std::map<std::string, Tensor> params{{"w", Tensor::scalar(2.5)}};
    AdamState state;
    autograd::GradientMap g1;
    g1.grads["w"] = Tensor::scalar(1.0);
    adam_step(params, g1, state, 1e-3);
    const double after_first = params.at("w")[0];
    const double m_before = state.m.at("w")[0];

    autograd::GradientMap g0;
    g0.grads["w"] = Tensor::scalar(0.0);
    // many zero-gradient steps still nudge w along the decayed momentum, but
    // on a fresh state they do nothing at all
    std::map<std::string, Tensor> fresh{{"w", Tensor::scalar(2.5)}};
    AdamState fresh_state;
    adam_step(fresh, g0, fresh_state, 1e-3);
    CHECK(fresh.at("w")[0] == 2.5);
    CHECK(fresh_state.m.at("w")[0] == 0.0);

    adam_step(params, g0, state, 1e-3);
    CHECK(state.m.at("w")[0] == doctest::Approx(0.9 * m_before).epsilon(1e-15));
    CHECK(after_first != params.at("w")[0]);  // momentum still moving
}

TEST_CASE("adam: first step magnitude is about lr for any gradient scale") {
    for (double g : {1e-3, 1.0, 1e6}) {
        std::map<std::string, Tensor> params{{"w", Tensor::scalar(0.0)}};
        AdamState state;
        autograd::GradientMap gm;
        gm.grads["w"] = Tensor::scalar(g);
        adam_step(params, gm, state, 1e-2);
        // closed form at t=1: |dw| = lr * g / (|g| + eps)
        CHECK(std::fabs(params.at("w")[0]) ==
              doctest::Approx(1e-2 * g / (g + 1e-8)).epsilon(1e-12));
        CHECK(std::fabs(params.at("w")[0]) == doctest::Approx(1e-2).epsilon(1e-4));
    }
}

TEST_CASE("learning-rate schedule halves every interval") {
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.lr_halve_every = 200000;
    CHECK(lr_at(cfg, 0) == 1e-4);
    CHECK(lr_at(cfg, 199999) == 1e-4);
    CHECK(lr_at(cfg, 200000) == 5e-5);
    CHECK(lr_at(cfg, 400000) == 2.5e-5);
}

TEST_CASE("patch defaults and validation") {
    TrainConfig cfg;
    CHECK(cfg.patch_size(4) == 192);  // 48f
    CHECK(cfg.patch_size(2) == 96);
    cfg.patch = 30;
    CHECK_THROWS_AS(cfg.validate(4), config_error);
    cfg.patch = 32;
    CHECK_NOTHROW(cfg.validate(4));
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(4), config_error);
}

TEST_CASE("sample_patches: determinism and pair construction") {
    const Dataset data = tiny_dataset(1);
    TrainConfig cfg = tiny_train(7, 10);

    Rng r1(cfg.seed), r2(cfg.seed);
    const Batch a = sample_patches(data, cfg, 2, r1);
    const Batch b = sample_patches(data, cfg, 2, r2);
    CHECK(ops::max_abs_diff(a.input, b.input) == 0.0);
    CHECK(ops::max_abs_diff(a.target, b.target) == 0.0);

    // the impaired input is exactly S_f-up(S_f-down(HR patch))
    for (int64_t item = 0; item < cfg.batch; ++item) {
        const int64_t inner = 3 * 16 * 16;
        Tensor hr({1, 3, 16, 16}, std::vector<double>(a.target.data() + item * inner,
                                                      a.target.data() + (item + 1) * inner));
        const Tensor rebuilt = ops::bicubic_resize(
            ops::bicubic_resize(hr, 2, ops::ResizeDir::down), 2, ops::ResizeDir::up);
        Tensor in({1, 3, 16, 16}, std::vector<double>(a.input.data() + item * inner,
                                                      a.input.data() + (item + 1) * inner));
        CHECK(ops::max_abs_diff(rebuilt, in) == 0.0);
    }

    // undersized images are rejected once nothing remains
    Dataset small;
    Rng rng(3);
    small.images.push_back(random_tensor({1, 3, 8, 8}, rng));
    CHECK_THROWS_AS(sample_patches(small, cfg, 2, r1), config_error);
}

TEST_CASE("fidelity training: loss drops after the first step for most seeds") {
    int improved = 0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        auto gen = NetworkGraph::build(tiny_model(), seed);
        std::vector<double> losses;
        TrainConfig cfg = tiny_train(seed, 2);
        cfg.lr = 1e-4;
        train_fidelity(gen, tiny_dataset(seed), cfg,
                       [&](const StepLog& log) { losses.push_back(log.losses[0].second); });
        REQUIRE(losses.size() == 2);
        if (losses[1] < losses[0]) ++improved;
    }
    CHECK(improved >= 3);  // majority
}

TEST_CASE("fidelity training is bitwise reproducible under a fixed seed") {
    auto run = [&] {
        auto gen = NetworkGraph::build(tiny_model(), 11);
        TrainConfig cfg = tiny_train(21, 6);
        const Checkpoint best = train_fidelity(gen, tiny_dataset(2), cfg);
        return std::make_pair(best, gen.params());
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first.step == b.first.step);
    CHECK(a.first.validation == b.first.validation);
    for (const auto& [name, p] : a.second) CHECK(ops::max_abs_diff(p, b.second.at(name)) == 0.0);
    for (const auto& [name, p] : a.first.params)
        CHECK(ops::max_abs_diff(p, b.first.params.at(name)) == 0.0);
}

TEST_CASE("checkpoints record strictly improving validation") {
    auto gen = NetworkGraph::build(tiny_model(), 13);
    TrainConfig cfg = tiny_train(5, 8);
    cfg.validate_every = 2;
    std::vector<double> vals;
    const Checkpoint best = train_fidelity(
        gen, tiny_dataset(4), cfg, {},
        [&](const NetworkGraph& g) {
            // deterministic surrogate validation: driven by the step count
            static const double seq[] = {5.0, 3.0, 4.0, 3.0};
            const double v = seq[vals.size() % 4];
            vals.push_back(v);
            return v;
        });
    // best must hold the first strict minimum (3.0 at the second validation)
    CHECK(best.validation == 3.0);
    CHECK(best.step == 3);  // second validation pass at step index 3
}

TEST_CASE("perceptual training: ln 2 start, finite short run") {
    auto gen = NetworkGraph::build(tiny_model(), 17);
    auto disc = perceptual::DiscriminatorGraph::build(perceptual::DiscConfig::for_factor(2), 18);
    TrainConfig cfg = tiny_train(19, 4);
    cfg.mode = TrainConfig::Mode::perceptual;
    std::vector<StepLog> logs;
    const Checkpoint best = train_perceptual(gen, disc, tiny_dataset(6), cfg, {},
                                             [&](const StepLog& log) { logs.push_back(log); });
    REQUIRE(!logs.empty());
    // zero-initialized discriminator head: C(R) = C(F) = 0 at step 0
    CHECK(logs[0].losses[0].first == "rsgan_d");
    CHECK(logs[0].losses[0].second == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    for (const auto& log : logs)
        for (const auto& [name, value] : log.losses) CHECK(std::isfinite(value));
    CHECK(best.mode == TrainConfig::Mode::perceptual);
}
