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

// dce: generate synthetic data, train, evaluate and run the cropper/enhancer.
//
// Exit codes: 0 success, 1 operational error, 2 usage error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dce/image.hpp"
#include "dce/metrics.hpp"
#include "dce/selftest.hpp"
#include "dce/synthgen.hpp"
#include "dce/train.hpp"
#include "dce/warp.hpp"

namespace fs = std::filesystem;
using namespace dce;

namespace {

struct GenArgs {
    int n = 0;
    std::uint64_t seed = 0;
    std::string fg_dir, bg_dir, out;
    TransformBounds bounds;
    int size = 224;
    int procedural = 0;
};

struct TrainArgs {
    std::string manifest, out, config, import_gamma;
    int steps = 0;
    std::uint64_t seed = 0;
    std::optional<int> croppers, batch, size;
    std::optional<double> lr;
    bool no_enhancer = false;
};

struct EvalArgs {
    std::string manifest, checkpoint, predictions, out;
    std::optional<int> resolution;
};

struct InferArgs {
    std::string checkpoint, input, out;
};

int cmd_gen(const GenArgs& a) {
    if (a.procedural > 0) {
        write_procedural_set(a.fg_dir, ProceduralKind::kForeground, a.procedural, 2 * a.size, a.seed);
        write_procedural_set(a.bg_dir, ProceduralKind::kBackground, a.procedural, 2 * a.size, a.seed + 1);
    }
    GenerateOptions opt;
    opt.n = a.n;
    opt.seed = a.seed;
    opt.bounds = a.bounds;
    opt.size = a.size;
    const Manifest m = generate_dataset(opt, a.fg_dir, a.bg_dir, a.out);
    std::cout << (fs::path(a.out) / "manifest.jsonl").string() << " " << m.records.size() << " samples\n";
    return 0;
}

int cmd_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw std::runtime_error("cannot read config " + a.config);
        cfg = nlohmann::json::parse(in).get<TrainConfig>();
    }
    cfg.max_steps = a.steps;
    cfg.seed = a.seed;
    if (a.croppers) cfg.model.n_croppers = *a.croppers;
    if (a.no_enhancer) cfg.model.enhancer_enabled = false;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (a.batch) cfg.batch_size = *a.batch;
    if (a.size) cfg.model.input_size = *a.size;

    std::optional<Checkpoint> donor;
    if (!a.import_gamma.empty()) {
        donor = load_checkpoint(a.import_gamma);
        cfg.model.gamma = gamma_config_of(*donor);
        cfg.model.cropper = CropperConfig::for_features(cfg.model.gamma.feature_channels());
    }
    const Manifest manifest = load_manifest(a.manifest);
    TrainLoopOptions opts;
    if (donor) opts.gamma_source = &*donor;
    const fs::path out = a.out;
    train_loop(cfg, manifest, out, opts);
    std::cout << (out / "checkpoint.dcec").string() << " after " << cfg.max_steps << " steps\n";
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    const Manifest manifest = load_manifest(a.manifest);
    if (manifest.records.empty()) throw std::runtime_error("manifest " + a.manifest + " is empty");
    const int base = read_png(manifest.resolve(manifest.records.front().gt_path)).height();
    const int resolution = a.resolution.value_or(base);

    Predictor predict;
    std::optional<DCEModel<float>> model;
    if (!a.checkpoint.empty()) {
        model.emplace(restore_model(load_checkpoint(a.checkpoint)));
        predict = model_predictor(*model, manifest, resolution);
    } else {
        const fs::path dir = a.predictions;
        predict = [dir](const SampleRecord& rec) { return read_png(dir / (rec.id + ".png")); };
    }
    const MetricReport report = evaluate_dataset(manifest, resolution, predict);
    const std::string json = report.to_json().dump(2) + "\n";
    if (!a.out.empty()) {
        if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
        std::ofstream(a.out) << json;
    }
    std::cout << render_table({{a.checkpoint.empty() ? "predictions" : "model", report}});
    return 0;
}

int cmd_infer(const InferArgs& a) {
    const DCEModel<float> model = restore_model(load_checkpoint(a.checkpoint));
    const Inference inf = run_inference(model, read_png(a.input));
    const fs::path out = a.out;
    fs::create_directories(out);
    write_png(out / "cropped.png", inf.cropped);
    write_png(out / "enhanced.png", inf.enhanced);
    nlohmann::json j;
    j["croppers"] = nlohmann::json::array();
    for (const auto& A : inf.affines) j["croppers"].push_back(A.a);
    j["composed"] = inf.composed.a;
    std::ofstream(out / "affine.json") << j.dump(2) << "\n";
    std::cout << out.string() << "\n";
    return 0;
}

int cmd_selftest() {
    auto checks = gradient_checks();
    auto inv = invariant_checks();
    checks.insert(checks.end(), inv.begin(), inv.end());
    std::cout << render_checks(checks);
    for (const auto& c : checks) {
        if (!c.passed) return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Photo-of-image cropper and enhancer"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a synthetic photo/ground-truth dataset");
    g->add_option("--n", gen.n, "Number of samples")->required()->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "Base seed");
    g->add_option("--fg-dir", gen.fg_dir, "Foreground PNG directory")->required();
    g->add_option("--bg-dir", gen.bg_dir, "Background PNG directory")->required();
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--scale-min", gen.bounds.scale_min, "Minimum foreground scale");
    g->add_option("--scale-max", gen.bounds.scale_max, "Maximum foreground scale");
    g->add_option("--rot-max", gen.bounds.rot_max_deg, "Maximum rotation in degrees");
    g->add_option("--persp-jitter", gen.bounds.perspective_jitter, "Corner jitter, fraction of the frame");
    g->add_option("--translate-max", gen.bounds.translate_max, "Centre offset, fraction of the frame (<0: any)");
    g->add_option("--size", gen.size, "Photo side in pixels")->check(CLI::PositiveNumber);
    g->add_option("--procedural", gen.procedural, "First write this many procedural fg/bg images into the dirs");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train croppers (and the enhancer)");
    t->add_option("--manifest", tr.manifest, "Training manifest.jsonl")->required();
    t->add_option("--out", tr.out, "Output directory")->required();
    t->add_option("--steps", tr.steps, "Optimizer steps")->required()->check(CLI::NonNegativeNumber);
    t->add_option("--seed", tr.seed, "Seed for initialisation and batch order");
    t->add_option("--croppers", tr.croppers, "Number of stacked croppers")->check(CLI::PositiveNumber);
    t->add_flag("--no-enhancer", tr.no_enhancer, "Train croppers only");
    t->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    t->add_option("--batch", tr.batch, "Mini-batch size")->check(CLI::PositiveNumber);
    t->add_option("--size", tr.size, "Model input side (multiple of 32)");
    t->add_option("--import-gamma", tr.import_gamma, "Checkpoint with extractor weights to import");
    t->add_option("--config", tr.config, "TrainConfig JSON; flags override it");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a model or a prediction directory");
    e->add_option("--manifest", ev.manifest, "Test manifest.jsonl")->required();
    auto* ck = e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint");
    auto* pr = e->add_option("--predictions", ev.predictions, "Directory of {id}.png predictions");
    ck->excludes(pr);
    pr->excludes(ck);
    e->add_option("--resolution", ev.resolution, "Ground-truth side to score at (gt or gt2x size)");
    e->add_option("--out", ev.out, "Report JSON path");

    InferArgs in;
    auto* i = app.add_subcommand("infer", "Crop and enhance one photo");
    i->add_option("--checkpoint", in.checkpoint, "Model checkpoint")->required();
    i->add_option("--input", in.input, "Photo PNG")->required();
    i->add_option("--out", in.out, "Output directory")->required();

    auto* s = app.add_subcommand("selftest", "Gradient and invariant checks");

    try {
        app.parse(argc, argv);
        if (e->parsed() && ev.checkpoint.empty() && ev.predictions.empty()) {
            throw CLI::RequiredError("--checkpoint or --predictions");
        }
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 2;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");

    try {
        if (g->parsed()) return cmd_gen(gen);
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_eval(ev);
        if (i->parsed()) return cmd_infer(in);
        if (s->parsed()) return cmd_selftest();
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}
