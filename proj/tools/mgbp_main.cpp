#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mgbp/complexity.hpp"
#include "mgbp/graph.hpp"
#include "mgbp/image_io.hpp"
#include "mgbp/metrics.hpp"
#include "mgbp/runconfig.hpp"
#include "mgbp/tiling.hpp"
#include "mgbp/trainer.hpp"

namespace fs = std::filesystem;
using namespace mgbp;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::string out_dir = "run";
    std::string weights;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_weights = true) {
    cmd->add_option("--config", o.config_path, "JSON run configuration");
    cmd->add_option("--preset", o.preset,
                    "built-in configuration (toy, image-f{2,3,4,8,16}, video-f{4,16})");
    cmd->add_option("--out", o.out_dir, "run directory for outputs");
    auto* s = cmd->add_option("--seed", o.seed, "seed override");
    s->each([&o](const std::string&) { o.seed_set = true; });
    if (with_weights) cmd->add_option("--weights", o.weights, "MGBPCKPT checkpoint to load");
}

RunConfig load_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty())
        cfg = RunConfig::from_json_file(o.config_path);
    else if (!o.preset.empty())
        cfg = RunConfig::preset(o.preset);
    else
        throw config_error("pass --config FILE or --preset NAME");
    if (o.seed_set) cfg.seed = o.seed;
    return cfg;
}

fs::path make_run_dir(const CommonOpts& o, const RunConfig& cfg) {
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    std::ofstream f(dir / "effective_config.json", std::ios::trunc);
    f << cfg.to_json();
    return dir;
}

NetworkGraph build_graph(const RunConfig& cfg, const CommonOpts& o) {
    NetworkGraph g = NetworkGraph::build(cfg.model, cfg.seed);
    if (!o.weights.empty()) g.load_checkpoint(o.weights);
    return g;
}

trainer::Dataset load_dataset(const std::string& dir) {
    trainer::Dataset data;
    for (const auto& name : imageio::list_pngs(dir)) data.images.push_back(imageio::read_png(name));
    return data;
}

std::vector<int64_t> describe_shape(const RunConfig& cfg, int64_t size, int64_t frames) {
    if (cfg.model.dims == 3) return {1, cfg.model.image_channels, frames, size, size};
    return {1, cfg.model.image_channels, size, size};
}

int cmd_describe(const CommonOpts& o, int64_t size, int64_t frames) {
    const RunConfig cfg = load_config(o);
    NetworkGraph g = NetworkGraph::build(cfg.model, cfg.seed);
    std::cout << "MGBP" << (cfg.model.dims == 3 ? "-3D" : "v2") << " generator\n"
              << "factor: " << cfg.model.factor << ", mu: " << cfg.model.steps
              << ", levels: " << cfg.model.levels << ", channels: " << cfg.model.channels_str()
              << "\n"
              << "modules: " << g.modules().size() << ", parameters: " << g.parameter_count()
              << "\n\n";
    const int64_t s = size > 0 ? size : 48ll * cfg.model.factor;
    const auto trace = g.trace_shapes(describe_shape(cfg, s, frames));
    std::cout << trace.summary();
    if (cfg.model.dims == 3)
        std::cout << "volume saving at the lowest level: " << trace.volume_saving() * 100.0
                  << "%\n";
    const auto cmp = complexity::compare(g, describe_shape(cfg, s, frames));
    std::cout << "\nrecurrence (calibrated) vs counted bp MACs: " << cmp.predicted << " vs "
              << cmp.counted_bp << " (gap " << cmp.rel_gap << ")\n"
              << "fitted per-level cost exponent: " << cmp.fitted_exponent << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& data_dir) {
    RunConfig cfg = load_config(o);
    const fs::path dir = make_run_dir(o, cfg);
    const trainer::Dataset data = load_dataset(data_dir);
    NetworkGraph gen = build_graph(cfg, o);

    std::ofstream log_file(dir / "log.jsonl", std::ios::trunc);
    trainer::LogSink sink = [&](const trainer::StepLog& s) {
        log_file << "{\"step\":" << s.step << ",\"lr\":" << s.lr;
        for (const auto& [k, v] : s.losses) log_file << ",\"" << k << "\":" << v;
        log_file << "}\n";
    };

    trainer::Checkpoint best;
    if (cfg.train.mode == trainer::TrainConfig::Mode::fidelity) {
        auto tcfg = cfg.train;
        tcfg.seed = cfg.seed;
        best = trainer::train_fidelity(gen, data, tcfg, sink);
    } else {
        auto disc_cfg = perceptual::DiscConfig::for_factor(cfg.model.factor);
        disc_cfg.width = cfg.discriminator_width;
        disc_cfg.vnsc = cfg.vnsc;
        auto disc = perceptual::DiscriminatorGraph::build(disc_cfg, cfg.seed + 1);
        auto tcfg = cfg.train;
        tcfg.seed = cfg.seed;
        best = trainer::train_perceptual(gen, disc, data, tcfg, cfg.loss_weights, sink);
    }
    gen.save_checkpoint((dir / "final.ckpt").string());
    if (best.step >= 0) {
        NetworkGraph snapshot = NetworkGraph::build(cfg.model, cfg.seed);
        snapshot.params() = best.params;
        snapshot.save_checkpoint((dir / "best.ckpt").string());
    }
    std::cout << "best validation " << best.validation << " at step " << best.step << "\n";
    return 0;
}

int cmd_infer(const CommonOpts& o, const std::string& input, const std::string& reference,
              double noise_amp) {
    RunConfig cfg = load_config(o);
    const fs::path dir = make_run_dir(o, cfg);
    NetworkGraph g = build_graph(cfg, o);
    const Tensor lr = imageio::read_png(input);
    const Tensor x = ops::bicubic_resize(lr, cfg.model.factor, ops::ResizeDir::up);
    const Tensor y = g.forward(x, cfg.seed, noise_amp);
    imageio::write_png(y, (dir / "output.png").string());
    if (!reference.empty()) {
        const Tensor ref = imageio::read_png(reference);
        const auto report = metrics::evaluate(y, ref, cfg.model.factor);
        std::ofstream mt(dir / "metrics.txt", std::ios::trunc);
        mt << report.line("output") << "\n";
        std::ofstream mj(dir / "metrics.jsonl", std::ios::trunc);
        mj << report.json_record("output") << "\n";
        std::cout << report.line("output") << "\n";
    }
    std::cout << "wrote " << (dir / "output.png").string() << "\n";
    return 0;
}

int cmd_infer_video(const CommonOpts& o, const std::string& input, const std::string& tile_arg,
                    int64_t stride_frames, double noise_amp) {
    RunConfig cfg = load_config(o);
    if (cfg.model.dims != 3) throw config_error("infer-video needs a 3D (video) config");
    const fs::path dir = make_run_dir(o, cfg);
    NetworkGraph g = build_graph(cfg, o);

    const Tensor lr = imageio::read_frame_dir(input);
    const Tensor x = ops::bicubic_resize(lr, cfg.model.factor, ops::ResizeDir::up);

    int64_t tt = std::min<int64_t>(cfg.tiles.t, x.time());
    int64_t ty = std::min<int64_t>(cfg.tile_y(), x.height());
    int64_t tx = std::min<int64_t>(cfg.tile_x(), x.width());
    if (!tile_arg.empty()) {
        std::istringstream is(tile_arg);
        char comma;
        if (!(is >> tt >> comma >> ty >> comma >> tx))
            throw config_error("--tile expects T,Y,X");
    }
    const auto plan = tiling::plan_tiles(x.shape(), tt, ty, tx, stride_frames,
                                         cfg.tiles.spatial_stride, cfg.tiles.halo);
    const Tensor y = tiling::tiled_infer(g, x, plan, noise_amp, cfg.seed);
    imageio::write_frame_dir(y, (dir / "frames").string());
    std::cout << "wrote " << plan.tiles.size() << "-tile result to " << (dir / "frames").string()
              << "\n";
    return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& input, const std::string& reference,
              const std::string& amps_arg) {
    RunConfig cfg = load_config(o);
    const fs::path dir = make_run_dir(o, cfg);
    NetworkGraph g = build_graph(cfg, o);
    const Tensor lr = imageio::read_png(input);
    const Tensor x = ops::bicubic_resize(lr, cfg.model.factor, ops::ResizeDir::up);
    Tensor ref;
    if (!reference.empty()) ref = imageio::read_png(reference);

    std::vector<double> amps;
    std::istringstream is(amps_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) amps.push_back(std::stod(tok));
    const auto rows = tiling::sweep_noise(g, x, amps, reference.empty() ? nullptr : &ref,
                                          cfg.seed);

    std::ofstream tsv(dir / "sweep.tsv", std::ios::trunc);
    tsv << "W\tl1\trmse\tpsnr_y\tvn_mean_abs\tvn_std\n";
    std::cout << "W\tl1\trmse\tpsnr_y\tvn_mean_abs\tvn_std\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.W << "\t" << r.l1 << "\t" << r.rmse << "\t" << r.psnr_y << "\t"
             << r.vn_mean_abs << "\t" << r.vn_std;
        tsv << line.str() << "\n";
        std::cout << line.str() << "\n";
    }
    return 0;
}

int cmd_dfv(const CommonOpts& o, const std::string& input, const std::string& pixel_arg,
            int64_t channel, double delta, double noise_amp) {
    RunConfig cfg = load_config(o);
    const fs::path dir = make_run_dir(o, cfg);
    NetworkGraph g = build_graph(cfg, o);
    const Tensor lr = imageio::read_png(input);
    const Tensor x = ops::bicubic_resize(lr, cfg.model.factor, ops::ResizeDir::up);

    tiling::PixelCoord pix;
    pix.channel = channel;
    {
        std::vector<int64_t> vals;
        std::istringstream is(pixel_arg);
        std::string tok;
        while (std::getline(is, tok, ',')) vals.push_back(std::stoll(tok));
        if (vals.size() == 2) {
            pix.y = vals[0];
            pix.x = vals[1];
        } else if (vals.size() == 3) {
            pix.t = vals[0];
            pix.y = vals[1];
            pix.x = vals[2];
        } else {
            throw config_error("--pixel expects Y,X or T,Y,X");
        }
    }
    const Tensor resp = tiling::dfv_impulse_response(g, x, pix, delta, noise_amp, cfg.seed);
    write_mgbt(resp, (dir / "response.mgbt").string());

    // normalized visualization: |response| scaled to [0, 255]
    double peak = 0.0;
    for (int64_t i = 0; i < resp.numel(); ++i) peak = std::max(peak, std::fabs(resp[i]));
    Tensor vis(resp.shape());
    if (peak > 0.0)
        for (int64_t i = 0; i < resp.numel(); ++i) vis[i] = 255.0 * std::fabs(resp[i]) / peak;
    if (vis.ndim() == 4) imageio::write_png(vis, (dir / "response.png").string());
    std::cout << "impulse response peak " << peak << ", saved to "
              << (dir / "response.mgbt").string() << "\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& o, double h, int samples) {
    RunConfig cfg = o.config_path.empty() && o.preset.empty()
                        ? RunConfig::preset("toy")
                        : load_config(o);
    NetworkGraph g = NetworkGraph::build(cfg.model, cfg.seed);
    Rng rng(cfg.seed + 17);
    const int64_t n = 16;
    Tensor input({1, cfg.model.image_channels, n, n});
    Tensor target(input.shape());
    for (int64_t i = 0; i < input.numel(); ++i) input[i] = rng.uniform(0.0, 255.0);
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = rng.uniform(0.0, 255.0);

    std::map<std::string, Tensor> leaves = g.params();
    leaves["__input"] = input;
    const Tensor noise = g.make_noise(input.shape(), 0, 0.0);
    const int factor = cfg.model.factor;
    auto fn = [&](autograd::Tape& tape, const autograd::LeafMap& lm) {
        exec::TapeCtx ctx(tape, lm);
        const auto x = tape.concat_channels(lm.at("__input"), tape.leaf(noise));
        const auto y0 = g.run(ctx, x);
        return perceptual::high_fidelity_loss_t(ctx, y0, tape.leaf(target), factor);
    };
    const double err = autograd::finite_diff_check(fn, leaves, h, cfg.seed + 23, samples);
    std::cout << "max relative error " << err << " over " << samples << " coordinates\n";
    if (!o.out_dir.empty() && o.out_dir != "run") {
        const fs::path dir = make_run_dir(o, cfg);
        std::ofstream f(dir / "gradcheck.txt", std::ios::trunc);
        f << "max_relative_error " << err << "\n";
    }
    return err < 1e-4 ? 0 : 1;
}

int cmd_analyze(const CommonOpts& o, int64_t size, int64_t frames) {
    RunConfig cfg = load_config(o);
    const fs::path dir = make_run_dir(o, cfg);
    NetworkGraph g = NetworkGraph::build(cfg.model, cfg.seed);
    const auto shape = describe_shape(cfg, size > 0 ? size : 48ll * cfg.model.factor, frames);
    const auto cmp = complexity::compare(g, shape);

    std::ostringstream os;
    os << cmp.report.text() << "recurrence (calibrated) total: " << cmp.predicted
       << "\ncounted bp total:              " << cmp.counted_bp << "\nrelative gap: " << cmp.rel_gap
       << "\nfitted per-level cost exponent: " << cmp.fitted_exponent
       << (cmp.sublinear_half ? " (< 1/2)" : " (>= 1/2)") << "\n";
    std::cout << os.str();
    std::ofstream txt(dir / "cost_report.txt", std::ios::trunc);
    txt << os.str();
    std::ofstream rec(dir / "cost_report.jsonl", std::ios::trunc);
    rec << "{\"mac_total\":" << cmp.report.mac_total << ",\"mac_bp\":" << cmp.report.mac_bp
        << ",\"predicted_bp\":" << cmp.predicted << ",\"rel_gap\":" << cmp.rel_gap
        << ",\"fitted_exponent\":" << cmp.fitted_exponent
        << ",\"peak_activation_bytes\":" << cmp.report.peak_activation_bytes << "}\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mgbp - multi-grid back-projection super-resolution engine"};
    app.require_subcommand(1);

    CommonOpts o_desc, o_train, o_infer, o_video, o_sweep, o_dfv, o_grad, o_analyze;
    int64_t describe_size = -1, describe_frames = 37;
    std::string train_data;
    std::string infer_input, infer_reference;
    double infer_noise = 0.0;
    std::string video_input, video_tile;
    int64_t video_stride = 5;
    double video_noise = 0.0;
    std::string sweep_input, sweep_reference, sweep_amps = "0,0.2,0.4,0.6,0.8,1.0";
    std::string dfv_input, dfv_pixel;
    int64_t dfv_channel = -1;
    double dfv_delta = 1.0, dfv_noise = 0.0;
    double grad_h = 1e-5;
    int grad_samples = 60;
    int64_t analyze_size = -1, analyze_frames = 37;

    auto* describe = app.add_subcommand("describe", "print the unfolded module structure");
    add_common(describe, o_desc, false);
    describe->add_option("--size", describe_size, "input extent (default 48*factor)");
    describe->add_option("--frames", describe_frames, "input frames for 3D configs");

    auto* train = app.add_subcommand("train", "train a generator");
    add_common(train, o_train);
    train->add_option("--data", train_data, "directory of HR PNG images")->required();

    auto* infer = app.add_subcommand("infer", "upscale one image");
    add_common(infer, o_infer);
    infer->add_option("--input", infer_input, "low-resolution PNG")->required();
    infer->add_option("--reference", infer_reference, "ground-truth PNG for metrics");
    infer->add_option("--noise-amp", infer_noise, "noise amplitude W");

    auto* video = app.add_subcommand("infer-video", "upscale a frame directory with tiling");
    add_common(video, o_video);
    video->add_option("--input", video_input, "directory of LR PNG frames")->required();
    video->add_option("--tile", video_tile, "tile extents T,Y,X");
    video->add_option("--stride-frames", video_stride, "temporal tile separation");
    video->add_option("--noise-amp", video_noise, "noise amplitude W");

    auto* sweep = app.add_subcommand("sweep", "noise-amplitude sweep");
    add_common(sweep, o_sweep);
    sweep->add_option("--input", sweep_input, "low-resolution PNG")->required();
    sweep->add_option("--reference", sweep_reference, "ground-truth PNG");
    sweep->add_option("--noise-amps", sweep_amps, "comma-separated W values");

    auto* dfv = app.add_subcommand("dfv", "frozen-activation impulse response");
    add_common(dfv, o_dfv);
    dfv->add_option("--input", dfv_input, "low-resolution PNG")->required();
    dfv->add_option("--pixel", dfv_pixel, "impulse location Y,X (or T,Y,X)")->required();
    dfv->add_option("--channel", dfv_channel, "input channel (-1 = all)");
    dfv->add_option("--delta", dfv_delta, "impulse amplitude");
    dfv->add_option("--noise-amp", dfv_noise, "noise amplitude W");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(grad, o_grad, false);
    grad->add_option("--fd-step", grad_h, "central-difference step");
    grad->add_option("--samples", grad_samples, "sampled coordinates");

    auto* analyze = app.add_subcommand("analyze", "cost recurrence vs exact op counts");
    add_common(analyze, o_analyze, false);
    analyze->add_option("--size", analyze_size, "input extent (default 48*factor)");
    analyze->add_option("--frames", analyze_frames, "input frames for 3D configs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (describe->parsed()) return cmd_describe(o_desc, describe_size, describe_frames);
        if (train->parsed()) return cmd_train(o_train, train_data);
        if (infer->parsed()) return cmd_infer(o_infer, infer_input, infer_reference, infer_noise);
        if (video->parsed())
            return cmd_infer_video(o_video, video_input, video_tile, video_stride, video_noise);
        if (sweep->parsed()) return cmd_sweep(o_sweep, sweep_input, sweep_reference, sweep_amps);
        if (dfv->parsed())
            return cmd_dfv(o_dfv, dfv_input, dfv_pixel, dfv_channel, dfv_delta, dfv_noise);
        if (grad->parsed()) return cmd_gradcheck(o_grad, grad_h, grad_samples);
        if (analyze->parsed()) return cmd_analyze(o_analyze, analyze_size, analyze_frames);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
