// Copyright (c) 2026, The DCE Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Python bindings. Images cross the boundary as float32 (H, W, 3) arrays in
// [0, 1]; configs and reports as JSON strings the package turns into dicts.

#include <stdexcept>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dce/image.hpp"
#include "dce/metrics.hpp"
#include "dce/selftest.hpp"
#include "dce/synthgen.hpp"
#include "dce/train.hpp"
#include "dce/warp.hpp"

namespace py = pybind11;
using namespace dce;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageRGB to_image(const FloatArray& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected an (H, W, 3) array");
    const int h = static_cast<int>(a.shape(0));
    const int w = static_cast<int>(a.shape(1));
    std::vector<float> chw(static_cast<std::size_t>(3) * h * w);
    auto v = a.unchecked<3>();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) chw[(static_cast<std::size_t>(c) * h + y) * w + x] = v(y, x, c);
    return ImageRGB(h, w, std::move(chw));
}

FloatArray to_array(const ImageRGB& img) {
    const int h = img.height();
    const int w = img.width();
    FloatArray out({h, w, 3});
    auto v = out.mutable_unchecked<3>();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) v(y, x, c) = img.at(c, y, x);
    return out;
}

AffineParams to_affine(const std::array<double, 6>& a) { return AffineParams{a}; }

FloatArray warp_affine(const FloatArray& image, const std::array<double, 6>& a, int height, int width) {
    const ImageRGB src = to_image(image);
    Tape<double> tape;
    const SampleGrid<double> grid = affine_grid<double>(to_affine(a), height, width);
    return to_array(ImageRGB::from_tensor(grid_sample(tape, src.to_tensor<double>(), grid)));
}

py::dict inference_dict(const Inference& inf) {
    py::list croppers;
    for (const auto& A : inf.affines) croppers.append(py::cast(A.a));
    py::dict d;
    d["croppers"] = croppers;
    d["composed"] = py::cast(inf.composed.a);
    d["cropped"] = to_array(inf.cropped);
    d["enhanced"] = to_array(inf.enhanced);
    return d;
}

class PyModel {
 public:
    explicit PyModel(const std::filesystem::path& checkpoint)
        : ckpt_(load_checkpoint(checkpoint)), model_(restore_model(ckpt_)) {}

    std::string config_json() const { return ckpt_.config.dump(); }
    std::uint64_t step() const { return ckpt_.step; }
    std::vector<std::string> parameter_names() const {
        std::vector<std::string> names;
        for (const auto& p : model_.parameters()) names.push_back(p.name);
        return names;
    }
    py::dict infer(const FloatArray& photo) const { return inference_dict(run_inference(model_, to_image(photo))); }

 private:
    Checkpoint ckpt_;
    DCEModel<float> model_;
};

std::vector<std::array<double, 4>> train(const std::string& config_json, const std::filesystem::path& manifest,
                                         const std::filesystem::path& out_dir) {
    const TrainConfig cfg = nlohmann::json::parse(config_json).get<TrainConfig>();
    const Manifest m = load_manifest(manifest);
    TrainResult result;
    {
        py::gil_scoped_release release;
        result = train_loop(cfg, m, out_dir);
    }
    std::vector<std::array<double, 4>> rows;
    for (const auto& r : result.history) rows.push_back({static_cast<double>(r.step), r.total, r.cropper, r.enhancer});
    return rows;
}

std::string evaluate_model(const std::filesystem::path& manifest_path, const std::filesystem::path& checkpoint,
                           int resolution) {
    const Manifest manifest = load_manifest(manifest_path);
    const DCEModel<float> model = restore_model(load_checkpoint(checkpoint));
    const MetricReport report = evaluate_dataset(manifest, resolution, model_predictor(model, manifest, resolution));
    return report.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cropper/enhancer core";

    m.def("read_png", [](const std::filesystem::path& p) { return to_array(read_png(p)); }, py::arg("path"));
    m.def("write_png", [](const std::filesystem::path& p, const FloatArray& img) { write_png(p, to_image(img)); },
          py::arg("path"), py::arg("image"));

    m.def("psnr", [](const FloatArray& a, const FloatArray& b) { return psnr(to_image(a), to_image(b)); });
    m.def("ssim", [](const FloatArray& a, const FloatArray& b) { return ssim(to_image(a), to_image(b)); });
    m.def("mse", [](const FloatArray& a, const FloatArray& b) { return mse_metric(to_image(a), to_image(b)); });

    m.def("warp_affine", &warp_affine, py::arg("image"), py::arg("affine"), py::arg("height"), py::arg("width"),
          "Bilinear resampling; the affine maps output to source normalized coordinates.");
    m.def("compose_affine",
          [](const std::array<double, 6>& outer, const std::array<double, 6>& inner) {
              return compose_affine(to_affine(outer), to_affine(inner)).a;
          },
          py::arg("outer"), py::arg("inner"));

    m.def("write_procedural_set",
          [](const std::filesystem::path& dir, bool foreground, int count, int size, std::uint64_t seed) {
              write_procedural_set(dir, foreground ? ProceduralKind::kForeground : ProceduralKind::kBackground, count,
                                   size, seed);
          },
          py::arg("dir"), py::arg("foreground"), py::arg("count"), py::arg("size"), py::arg("seed"));

    m.def("generate_dataset",
          [](const std::filesystem::path& fg, const std::filesystem::path& bg, const std::filesystem::path& out, int n,
             std::uint64_t seed, int size, double scale_min, double scale_max, double rot_max_deg,
             double perspective_jitter, double translate_max) {
              GenerateOptions opt;
              opt.n = n;
              opt.seed = seed;
              opt.size = size;
              opt.bounds = {scale_min, scale_max, rot_max_deg, perspective_jitter, translate_max};
              py::gil_scoped_release release;
              return generate_dataset(opt, fg, bg, out).records.size();
          },
          py::arg("fg_dir"), py::arg("bg_dir"), py::arg("out_dir"), py::arg("n"), py::arg("seed") = 0,
          py::arg("size") = 224, py::arg("scale_min") = 0.5, py::arg("scale_max") = 0.8, py::arg("rot_max_deg") = 25.0,
          py::arg("perspective_jitter") = 0.05, py::arg("translate_max") = -1.0);

    m.def("default_train_config", [] { return nlohmann::json(TrainConfig{}).dump(); });
    m.def("train", &train, py::arg("config_json"), py::arg("manifest"), py::arg("out_dir"));
    m.def("evaluate", &evaluate_model, py::arg("manifest"), py::arg("checkpoint"), py::arg("resolution"));

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
        .def_property_readonly("config_json", &PyModel::config_json)
        .def_property_readonly("step", &PyModel::step)
        .def_property_readonly("parameter_names", &PyModel::parameter_names)
        .def("infer", &PyModel::infer, py::arg("photo"));

    m.def("selftest", [] {
        auto checks = gradient_checks();
        auto inv = invariant_checks();
        checks.insert(checks.end(), inv.begin(), inv.end());
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& c : checks) out.emplace_back(c.name, c.passed, c.detail);
        return out;
    });

    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
}
