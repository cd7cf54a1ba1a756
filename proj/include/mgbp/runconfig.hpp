#pragma once

#include <cstdint>
#include <string>

#include "mgbp/modules.hpp"
#include "mgbp/perceptual.hpp"
#include "mgbp/trainer.hpp"

namespace mgbp {

// Parsed run configuration. The JSON schema is strict: unknown keys are
// rejected, and the emitted effective config spells out every default.
struct RunConfig {
    int version = 1;
    uint64_t seed = 0;
    MgbpConfig model;
    trainer::TrainConfig train;
    perceptual::VnscConfig vnsc;
    perceptual::LossWeights loss_weights;
    int discriminator_width = 64;

    struct Tiles {
        int64_t t = 37;
        int64_t y = -1, x = -1;        // -1 -> training patch size (48 * factor)
        int64_t stride_frames = 5;
        int64_t spatial_stride = -1;   // -1 -> half the tile
        int64_t halo = 0;
    } tiles;

    static RunConfig preset(const std::string& name);
    static RunConfig from_json(const std::string& text);
    static RunConfig from_json_file(const std::string& path);

    // Effective config with every default resolved; parsing it back
    // reproduces this config exactly.
    std::string to_json() const;

    void validate() const;
    int64_t tile_y() const { return tiles.y > 0 ? tiles.y : 48ll * model.factor; }
    int64_t tile_x() const { return tiles.x > 0 ? tiles.x : 48ll * model.factor; }
};

}  // namespace mgbp
