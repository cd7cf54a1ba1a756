#include "mgbp/runconfig.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace mgbp {

using nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw config_error("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_to(const ordered_json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string("invalid value for key '") + key + "'");
    }
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
    RunConfig c;
    if (name == "toy") {
        c.model = MgbpConfig::toy();
        c.train.batch = 4;
        c.train.patch = 32;
        c.train.max_steps = 200;
        c.train.validate_every = 20;
    } else if (name.rfind("image-f", 0) == 0) {
        c.model = MgbpConfig::image_preset(std::stoi(name.substr(7)));
    } else if (name.rfind("video-f", 0) == 0) {
        c.model = MgbpConfig::video_preset(std::stoi(name.substr(7)));
    } else {
        throw config_error("unknown preset '" + name +
                           "' (try toy, image-f2, image-f3, image-f4, image-f8, image-f16, "
                           "video-f4, video-f16)");
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be a JSON object");
    reject_unknown(j, {"version", "seed", "model", "train", "vnsc", "loss_weights",
                       "discriminator", "tiles"},
                   "config root");
    RunConfig c;
    read_to(j, "version", c.version);
    if (c.version != 1) throw config_error("unsupported config version");
    read_to(j, "seed", c.seed);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m, {"dims", "factor", "levels", "steps", "channels", "image_channels",
                           "noise_amplitude", "temporal_kernels", "temporal_padding",
                           "analysis_temporal_kernel"},
                       "model");
        read_to(m, "dims", c.model.dims);
        read_to(m, "factor", c.model.factor);
        read_to(m, "levels", c.model.levels);
        read_to(m, "steps", c.model.steps);
        read_to(m, "channels", c.model.channels);
        read_to(m, "image_channels", c.model.image_channels);
        read_to(m, "noise_amplitude", c.model.noise_amplitude);
        read_to(m, "temporal_kernels", c.model.temporal_kernels);
        read_to(m, "temporal_padding", c.model.temporal_padding);
        read_to(m, "analysis_temporal_kernel", c.model.analysis_temporal_kernel);
        if (c.model.temporal_kernels.empty())
            c.model.temporal_kernels.assign(static_cast<size_t>(c.model.levels - 1), 1);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        reject_unknown(t, {"batch", "patch", "lr", "lr_halve_every", "max_steps", "flip_h",
                           "flip_v", "rot90", "mode", "validate_every", "noise_amplitude"},
                       "train");
        read_to(t, "batch", c.train.batch);
        read_to(t, "patch", c.train.patch);
        read_to(t, "lr", c.train.lr);
        read_to(t, "lr_halve_every", c.train.lr_halve_every);
        read_to(t, "max_steps", c.train.max_steps);
        read_to(t, "flip_h", c.train.flip_h);
        read_to(t, "flip_v", c.train.flip_v);
        read_to(t, "rot90", c.train.rot90);
        read_to(t, "validate_every", c.train.validate_every);
        read_to(t, "noise_amplitude", c.train.noise_amplitude);
        if (t.contains("mode")) {
            const std::string mode = t.at("mode").get<std::string>();
            if (mode == "fidelity")
                c.train.mode = trainer::TrainConfig::Mode::fidelity;
            else if (mode == "perceptual")
                c.train.mode = trainer::TrainConfig::Mode::perceptual;
            else
                throw config_error("train.mode must be 'fidelity' or 'perceptual'");
        }
    }
    if (j.contains("vnsc")) {
        const auto& v = j.at("vnsc");
        reject_unknown(v, {"kernel", "sigma", "range"}, "vnsc");
        read_to(v, "kernel", c.vnsc.kernel);
        read_to(v, "sigma", c.vnsc.sigma);
        read_to(v, "range", c.vnsc.range);
    }
    if (j.contains("loss_weights")) {
        const auto& w = j.at("loss_weights");
        reject_unknown(w, {"gan", "cycle", "cx", "l1"}, "loss_weights");
        read_to(w, "gan", c.loss_weights.gan);
        read_to(w, "cycle", c.loss_weights.cycle);
        read_to(w, "cx", c.loss_weights.cx);
        read_to(w, "l1", c.loss_weights.l1);
    }
    if (j.contains("discriminator")) {
        const auto& d = j.at("discriminator");
        reject_unknown(d, {"width"}, "discriminator");
        read_to(d, "width", c.discriminator_width);
    }
    if (j.contains("tiles")) {
        const auto& t = j.at("tiles");
        reject_unknown(t, {"t", "y", "x", "stride_frames", "spatial_stride", "halo"}, "tiles");
        read_to(t, "t", c.tiles.t);
        read_to(t, "y", c.tiles.y);
        read_to(t, "x", c.tiles.x);
        read_to(t, "stride_frames", c.tiles.stride_frames);
        read_to(t, "spatial_stride", c.tiles.spatial_stride);
        read_to(t, "halo", c.tiles.halo);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string RunConfig::to_json() const {
    ordered_json j;
    j["version"] = version;
    j["seed"] = seed;
    ordered_json m;
    m["dims"] = model.dims;
    m["factor"] = model.factor;
    m["levels"] = model.levels;
    m["steps"] = model.steps;
    m["channels"] = model.channels;
    m["image_channels"] = model.image_channels;
    m["noise_amplitude"] = model.noise_amplitude;
    m["temporal_kernels"] = model.temporal_kernels.empty()
                                ? std::vector<int>(static_cast<size_t>(model.levels - 1), 1)
                                : model.temporal_kernels;
    m["temporal_padding"] = model.temporal_padding;
    m["analysis_temporal_kernel"] = model.analysis_temporal_kernel;
    j["model"] = m;
    ordered_json t;
    t["batch"] = train.batch;
    t["patch"] = train.patch_size(model.factor);
    t["lr"] = train.lr;
    t["lr_halve_every"] = train.lr_halve_every;
    t["max_steps"] = train.max_steps;
    t["flip_h"] = train.flip_h;
    t["flip_v"] = train.flip_v;
    t["rot90"] = train.rot90;
    t["mode"] = train.mode == trainer::TrainConfig::Mode::fidelity ? "fidelity" : "perceptual";
    t["validate_every"] = train.validate_every;
    t["noise_amplitude"] = train.noise_amplitude;
    j["train"] = t;
    ordered_json v;
    v["kernel"] = vnsc.kernel;
    v["sigma"] = vnsc.sigma;
    v["range"] = vnsc.range;
    j["vnsc"] = v;
    ordered_json w;
    w["gan"] = loss_weights.gan;
    w["cycle"] = loss_weights.cycle;
    w["cx"] = loss_weights.cx;
    w["l1"] = loss_weights.l1;
    j["loss_weights"] = w;
    ordered_json d;
    d["width"] = discriminator_width;
    j["discriminator"] = d;
    ordered_json ti;
    ti["t"] = tiles.t;
    ti["y"] = tile_y();
    ti["x"] = tile_x();
    ti["stride_frames"] = tiles.stride_frames;
    ti["spatial_stride"] = tiles.spatial_stride > 0 ? tiles.spatial_stride : tile_y() / 2;
    ti["halo"] = tiles.halo;
    j["tiles"] = ti;
    return j.dump(2) + "\n";
}

void RunConfig::validate() const {
    model.validate();
    train.validate(model.factor);
    loss_weights.validate();
    if (discriminator_width < 1) throw config_error("discriminator width must be >= 1");
    if (tiles.t < 1 || tiles.stride_frames < 1)
        throw config_error("tile extents and strides must be >= 1");
}

}  // namespace mgbp
