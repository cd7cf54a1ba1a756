#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mgbp/graph.hpp"
#include "mgbp/image_io.hpp"
#include "mgbp/runconfig.hpp"
#include "mgbp/rng.hpp"
#include "test_helpers.hpp"

using namespace mgbp;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MGBP_BIN) + " " + args;
    return std::system(cmd.c_str());
}

size_t line_count(const fs::path& p) {
    const std::string text = slurp(p);
    size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("run config: presets round-trip through JSON exactly") {
    for (const char* name : {"toy", "image-f4", "image-f8", "video-f16"}) {
        const RunConfig a = RunConfig::preset(name);
        const std::string ja = a.to_json();
        const RunConfig b = RunConfig::from_json(ja);
        CHECK(b.to_json() == ja);
    }
}

TEST_CASE("run config: strict schema rejects unknown keys by name") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json(R"({"version":1,"modell":{}})"),
                         doctest::Contains("modell"), config_error);
    CHECK_THROWS_WITH_AS(
        RunConfig::from_json(R"({"version":1,"model":{"dims":2,"factor":2,"levels":2,"steps":2,
                                 "channels":[4,4],"upscaler":"x"}})"),
        doctest::Contains("upscaler"), config_error);
    CHECK_THROWS_AS(RunConfig::from_json(R"({"version":2})"), config_error);
    CHECK_THROWS_WITH_AS(RunConfig::from_json(R"({"train":{"mode":"both"}})"),
                         doctest::Contains("mode"), config_error);
    CHECK_THROWS_AS(RunConfig::from_json("not json"), config_error);
}

TEST_CASE("run config: effective config resolves every default") {
    const RunConfig toy = RunConfig::preset("toy");
    const std::string j = toy.to_json();
    CHECK(j.find("\"patch\": 32") != std::string::npos);
    CHECK(j.find("\"lr\": 0.0001") != std::string::npos);
    CHECK(j.find("\"lr_halve_every\": 200000") != std::string::npos);
    CHECK(j.find("\"batch\":") != std::string::npos);
    CHECK(j.find("\"gan\": 0.001") != std::string::npos);
    CHECK(j.find("\"stride_frames\": 5") != std::string::npos);
    // tile extents resolve to the training patch (48 * factor)
    const RunConfig f4 = RunConfig::preset("image-f4");
    CHECK(f4.to_json().find("\"y\": 192") != std::string::npos);
}

TEST_CASE("PNG round trip and encoder determinism") {
    Rng rng(1);
    Tensor img = random_tensor({1, 3, 9, 13}, rng, -20.0, 275.0);  // forces clamping
    const fs::path dir = "cli_png";
    fs::create_directories(dir);
    imageio::write_png(img, (dir / "a.png").string());
    imageio::write_png(img, (dir / "b.png").string());
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));

    const Tensor back = imageio::read_png((dir / "a.png").string());
    REQUIRE(back.shape() == img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) {
        const double q = std::clamp(static_cast<double>(std::llround(img[i])), 0.0, 255.0);
        CHECK(back[i] == q);  // round half away from zero, clamp at encode
    }

    std::ofstream bad(dir / "bad.png", std::ios::binary);
    bad << "definitely not a png";
    bad.close();
    CHECK_THROWS_AS(imageio::read_png((dir / "bad.png").string()), io_error);
}

TEST_CASE("frame directory round trip") {
    Rng rng(2);
    Tensor cube({1, 3, 4, 8, 8});
    for (int64_t i = 0; i < cube.numel(); ++i) cube[i] = static_cast<double>(rng.below(256));
    const fs::path dir = "cli_frames";
    imageio::write_frame_dir(cube, dir.string());
    const Tensor back = imageio::read_frame_dir(dir.string());
    CHECK(back.shape() == cube.shape());
    CHECK(ops::max_abs_diff(back, cube) == 0.0);
}

TEST_CASE("cli: describe prints the published factor-8 schedule") {
    REQUIRE(run_cli("describe --preset image-f8 --size 96 > cli_describe.txt") == 0);
    const std::string out = slurp("cli_describe.txt");
    CHECK(out.find("levels: 5") != std::string::npos);
    CHECK(out.find("192-128-64-32-16") != std::string::npos);
}

TEST_CASE("cli: deterministic inference writes byte-identical PNGs") {
    Rng rng(3);
    fs::create_directories("cli_in");
    imageio::write_png(random_tensor({1, 3, 32, 32}, rng, 0.0, 255.0), "cli_in/lr.png");

    REQUIRE(run_cli("infer --preset toy --input cli_in/lr.png --out cli_run_a --seed 5") == 0);
    REQUIRE(run_cli("infer --preset toy --input cli_in/lr.png --out cli_run_b --seed 5") == 0);
    CHECK(slurp("cli_run_a/output.png") == slurp("cli_run_b/output.png"));
    CHECK(fs::exists("cli_run_a/effective_config.json"));

    // metrics records appear when a reference is supplied
    REQUIRE(run_cli("infer --preset toy --input cli_in/lr.png --reference cli_run_a/output.png "
                    "--out cli_run_c --seed 5 > /dev/null") == 0);
    CHECK(fs::exists("cli_run_c/metrics.jsonl"));

    // missing files end with a nonzero exit and a diagnostic
    CHECK(run_cli("infer --preset toy --input cli_in/missing.png --out cli_run_d 2> /dev/null") !=
          0);
}

TEST_CASE("cli: sweep emits one row per amplitude") {
    REQUIRE(run_cli("sweep --preset toy --input cli_in/lr.png --reference cli_run_a/output.png "
                    "--noise-amps 0,0.2,0.4,0.6,0.8,1.0 --out cli_sweep > /dev/null") == 0);
    CHECK(line_count("cli_sweep/sweep.tsv") == 7);  // header + 6 rows
}

TEST_CASE("cli: training runs are reproducible from the effective config") {
    Rng rng(4);
    fs::create_directories("cli_data");
    imageio::write_png(random_tensor({1, 3, 48, 48}, rng, 0.0, 255.0), "cli_data/img.png");

    std::ofstream cfg("cli_train_cfg.json");
    cfg << R"({"version":1,"seed":3,
               "model":{"dims":2,"factor":2,"levels":2,"steps":2,"channels":[6,4]},
               "train":{"batch":1,"patch":16,"max_steps":3,"validate_every":2}})";
    cfg.close();

    REQUIRE(run_cli("train --config cli_train_cfg.json --data cli_data --out cli_tr_a "
                    "> /dev/null") == 0);
    REQUIRE(run_cli("train --config cli_tr_a/effective_config.json --data cli_data "
                    "--out cli_tr_b > /dev/null") == 0);
    CHECK(slurp("cli_tr_a/final.ckpt") == slurp("cli_tr_b/final.ckpt"));
    CHECK(slurp("cli_tr_a/log.jsonl") == slurp("cli_tr_b/log.jsonl"));
    CHECK(fs::exists("cli_tr_a/best.ckpt"));

    // the checkpoint loads back into inference
    REQUIRE(run_cli("infer --config cli_tr_a/effective_config.json --weights cli_tr_a/final.ckpt "
                    "--input cli_in/lr.png --out cli_tr_infer > /dev/null") == 0);
}

TEST_CASE("cli: dfv and analyze write their artifacts") {
    REQUIRE(run_cli("dfv --preset toy --input cli_in/lr.png --pixel 8,9 --out cli_dfv "
                    "> /dev/null") == 0);
    CHECK(fs::exists("cli_dfv/response.mgbt"));
    const Tensor resp = read_mgbt("cli_dfv/response.mgbt");
    CHECK(resp.shape() == std::vector<int64_t>{1, 3, 64, 64});

    REQUIRE(run_cli("analyze --preset toy --out cli_an > /dev/null") == 0);
    CHECK(fs::exists("cli_an/cost_report.txt"));
    CHECK(fs::exists("cli_an/cost_report.jsonl"));
}

TEST_CASE("cli: tiled video inference over a frame directory") {
    Rng rng(5);
    Tensor cube({1, 3, 12, 12, 12});
    for (int64_t i = 0; i < cube.numel(); ++i) cube[i] = static_cast<double>(rng.below(256));
    imageio::write_frame_dir(cube, "cli_vin");

    std::ofstream cfg("cli_video_cfg.json");
    cfg << R"({"version":1,"seed":0,
               "model":{"dims":3,"factor":4,"levels":2,"steps":1,"channels":[6,4],
                        "temporal_kernels":[3]},
               "tiles":{"t":8,"y":48,"x":48,"stride_frames":5}})";
    cfg.close();

    REQUIRE(run_cli("infer-video --config cli_video_cfg.json --input cli_vin --out cli_vout "
                    "> /dev/null") == 0);
    const Tensor out = imageio::read_frame_dir("cli_vout/frames");
    CHECK(out.shape() == std::vector<int64_t>{1, 3, 12, 48, 48});
}
