#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mgbp/complexity.hpp"
#include "mgbp/graph.hpp"
#include "mgbp/metrics.hpp"
#include "mgbp/perceptual.hpp"
#include "mgbp/runconfig.hpp"
#include "mgbp/tiling.hpp"

namespace py = pybind11;
using namespace mgbp;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor from_array(const DArray& a) {
    std::vector<int64_t> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
}

ops::ConvSpec make_spec(int64_t in_ch, int64_t out_ch, std::vector<int> kernel,
                        std::vector<int> stride, std::vector<int> pad) {
    auto expand = [](std::vector<int>& v, int def) {
        if (v.empty()) v = {1, def, def};
        if (v.size() == 1) v = {1, v[0], v[0]};
        if (v.size() == 2) v = {1, v[0], v[1]};
        if (v.size() != 3) throw config_error("kernel/stride/pad take 1, 2 or 3 entries");
    };
    expand(kernel, 1);
    expand(stride, 1);
    expand(pad, 0);
    ops::ConvSpec s;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kt = kernel[0];
    s.kh = kernel[1];
    s.kw = kernel[2];
    s.st = stride[0];
    s.sh = stride[1];
    s.sw = stride[2];
    s.pt = pad[0];
    s.ph = pad[1];
    s.pw = pad[2];
    return s;
}

class PyGenerator {
public:
    PyGenerator(const std::string& preset, const std::string& config_json, uint64_t seed) {
        if (!config_json.empty())
            cfg_ = RunConfig::from_json(config_json);
        else
            cfg_ = RunConfig::preset(preset.empty() ? "toy" : preset);
        cfg_.seed = seed;
        graph_ = NetworkGraph::build(cfg_.model, seed);
    }

    py::array forward(const DArray& x, uint64_t noise_seed, double W) const {
        return to_array(graph_.forward(from_array(x), noise_seed, W));
    }

    py::array tiled_forward(const DArray& x, int64_t tile_t, int64_t tile_y, int64_t tile_x,
                            int64_t stride_frames, int64_t spatial_stride, int64_t halo,
                            double W, uint64_t seed) const {
        const Tensor input = from_array(x);
        const auto plan = tiling::plan_tiles(input.shape(), tile_t, tile_y, tile_x,
                                             stride_frames, spatial_stride, halo);
        return to_array(tiling::tiled_infer(graph_, input, plan, W, seed));
    }

    py::array dfv(const DArray& x, int64_t t, int64_t y, int64_t px, int64_t channel,
                  double delta) const {
        tiling::PixelCoord pix{t, y, px, channel};
        return to_array(tiling::dfv_impulse_response(graph_, from_array(x), pix, delta));
    }

    std::string trace(const std::vector<int64_t>& input_shape) const {
        return graph_.trace_shapes(input_shape).summary();
    }
    int64_t leaf_bp_invocations(const std::vector<int64_t>& input_shape) const {
        return graph_.trace_shapes(input_shape).leaf_bp_invocations;
    }
    int64_t parameter_count() const { return graph_.parameter_count(); }
    int levels() const { return cfg_.model.levels; }
    int steps() const { return cfg_.model.steps; }
    int factor() const { return cfg_.model.factor; }
    std::string effective_config() const { return cfg_.to_json(); }
    void save(const std::string& path) const { graph_.save_checkpoint(path); }
    void load(const std::string& path) { graph_.load_checkpoint(path); }

private:
    RunConfig cfg_;
    NetworkGraph graph_;
};

}  // namespace

PYBIND11_MODULE(_mgbp, m) {
    m.doc() = "Multi-grid back-projection super-resolution core";

    py::register_exception<dimension_error>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<spec_error>(m, "SpecError", PyExc_ValueError);
    py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);

    m.def(
        "conv",
        [](const DArray& x, const DArray& w, const DArray& b, int64_t in_ch, int64_t out_ch,
           std::vector<int> kernel, std::vector<int> stride, std::vector<int> pad) {
            return to_array(ops::conv(from_array(x), from_array(w),
                                      b.size() ? from_array(b) : Tensor(),
                                      make_spec(in_ch, out_ch, kernel, stride, pad)));
        },
        py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("in_channels"),
        py::arg("out_channels"), py::arg("kernel"), py::arg("stride") = std::vector<int>{},
        py::arg("pad") = std::vector<int>{});

    m.def(
        "conv_transposed",
        [](const DArray& x, const DArray& w, const DArray& b, int64_t in_ch, int64_t out_ch,
           std::vector<int> kernel, std::vector<int> stride, std::vector<int> pad) {
            return to_array(ops::conv_transposed(from_array(x), from_array(w),
                                                 b.size() ? from_array(b) : Tensor(),
                                                 make_spec(in_ch, out_ch, kernel, stride, pad)));
        },
        py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("in_channels"),
        py::arg("out_channels"), py::arg("kernel"), py::arg("stride") = std::vector<int>{},
        py::arg("pad") = std::vector<int>{});

    m.def("relu", [](const DArray& x) { return to_array(ops::relu(from_array(x))); });
    m.def("concat_channels", [](const DArray& a, const DArray& b) {
        return to_array(ops::concat_channels(from_array(a), from_array(b)));
    });
    m.def(
        "bicubic_resize",
        [](const DArray& x, int factor, const std::string& dir) {
            return to_array(ops::bicubic_resize(
                from_array(x), factor,
                dir == "down" ? ops::ResizeDir::down : ops::ResizeDir::up));
        },
        py::arg("x"), py::arg("factor"), py::arg("direction") = "up");
    m.def(
        "gaussian_blur",
        [](const DArray& x, int ksize, double sigma) {
            return to_array(ops::gaussian_blur(from_array(x), ksize, sigma));
        },
        py::arg("x"), py::arg("kernel") = 7, py::arg("sigma") = 1.17);

    m.def("luminance_bt609",
          [](const DArray& rgb) { return to_array(perceptual::luminance_bt609(from_array(rgb))); });
    m.def(
        "variance_normalize",
        [](const DArray& lum, int kernel, double sigma) {
            perceptual::VnscConfig cfg;
            cfg.kernel = kernel;
            cfg.sigma = sigma;
            return to_array(perceptual::variance_normalize(from_array(lum), cfg));
        },
        py::arg("lum"), py::arg("kernel") = 7, py::arg("sigma") = 1.17);
    m.def(
        "vnsc",
        [](const DArray& rgb, int kernel, double sigma, int range) {
            perceptual::VnscConfig cfg;
            cfg.kernel = kernel;
            cfg.sigma = sigma;
            cfg.range = range;
            return to_array(perceptual::vnsc(from_array(rgb), cfg));
        },
        py::arg("rgb"), py::arg("kernel") = 7, py::arg("sigma") = 1.17, py::arg("range") = 3);

    m.def("rsgan_losses", [](const DArray& c_real, const DArray& c_fake) {
        const auto r = perceptual::rsgan_losses(from_array(c_real), from_array(c_fake));
        return py::make_tuple(r.d, r.g);
    });
    m.def("high_fidelity_loss", [](const DArray& y0, const DArray& x, int factor) {
        return perceptual::high_fidelity_loss(from_array(y0), from_array(x), factor);
    });

    m.def(
        "psnr_y",
        [](const DArray& a, const DArray& b, int border) {
            return metrics::psnr_y(from_array(a), from_array(b), border);
        },
        py::arg("a"), py::arg("b"), py::arg("border_crop") = 0);
    m.def("ssim_y", [](const DArray& a, const DArray& b) {
        return metrics::ssim_y(from_array(a), from_array(b));
    });
    m.def("rmse",
          [](const DArray& a, const DArray& b) { return metrics::rmse(from_array(a), from_array(b)); });
    m.def("l1",
          [](const DArray& a, const DArray& b) { return metrics::l1(from_array(a), from_array(b)); });

    py::class_<PyGenerator>(m, "Generator")
        .def(py::init<const std::string&, const std::string&, uint64_t>(),
             py::arg("preset") = "toy", py::arg("config_json") = "", py::arg("seed") = 0)
        .def("forward", &PyGenerator::forward, py::arg("x"), py::arg("noise_seed") = 0,
             py::arg("noise_amplitude") = 0.0)
        .def("tiled_forward", &PyGenerator::tiled_forward, py::arg("x"), py::arg("tile_t"),
             py::arg("tile_y"), py::arg("tile_x"), py::arg("stride_frames") = 5,
             py::arg("spatial_stride") = -1, py::arg("halo") = 0, py::arg("noise_amplitude") = 0.0,
             py::arg("noise_seed") = 0)
        .def("dfv", &PyGenerator::dfv, py::arg("x"), py::arg("t"), py::arg("y"), py::arg("x_pos"),
             py::arg("channel") = -1, py::arg("delta") = 1.0)
        .def("trace", &PyGenerator::trace)
        .def("leaf_bp_invocations", &PyGenerator::leaf_bp_invocations)
        .def("parameter_count", &PyGenerator::parameter_count)
        .def("levels", &PyGenerator::levels)
        .def("steps", &PyGenerator::steps)
        .def("factor", &PyGenerator::factor)
        .def("effective_config", &PyGenerator::effective_config)
        .def("save", &PyGenerator::save)
        .def("load", &PyGenerator::load);
}
