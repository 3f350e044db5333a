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

#include "dce/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "dce/image.hpp"
#include "dce/parallel.hpp"
#include "dce/warp.hpp"

namespace dce {

namespace fs = std::filesystem;

// --- Adam -------------------------------------------------------------------

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
               double lr, const AdamOptions& options, std::int64_t t) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw DimensionError("adam_step: parameter has " + std::to_string(param.size()) +
                             " elements but gradient/moments have " + std::to_string(grad.size()) +
                             "/" + std::to_string(m.size()) + "/" + std::to_string(v.size()));
    }
    if (t < 1) throw std::invalid_argument("adam_step: step counter must start at 1");
    const double b1 = options.beta1, b2 = options.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = b1 * m[i] + (1.0 - b1) * g;
        const double vi = b2 * v[i] + (1.0 - b2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + options.epsilon);
        param[i] = static_cast<T>(param[i] - update);
    }
}

template void adam_step<float>(std::span<float>, std::span<const float>, std::span<float>,
                               std::span<float>, double, const AdamOptions&, std::int64_t);
template void adam_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                                std::span<double>, double, const AdamOptions&, std::int64_t);

double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && std::isfinite(norm)) {
        const float factor = static_cast<float>(max_norm / norm);
        for (const auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (float& g : p.tensor.grad_buffer()) g *= factor;
        }
    }
    return norm;
}

// --- Config -------------------------------------------------------------------

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    model.validate();
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (max_steps < 0) fail("max_steps must be >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        fail("adam betas must lie in [0, 1)");
    }
    if (!(adam.epsilon > 0.0)) fail("adam epsilon must be positive");
    if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
    if (eval_every < 0 || checkpoint_every < 0) fail("eval_every and checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{
        {"model", c.model},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"max_steps", c.max_steps},
        {"seed", c.seed},
        {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
        {"freeze_gamma", c.freeze_gamma},
        {"clip_norm", c.clip_norm},
        {"eval_every", c.eval_every},
        {"checkpoint_every", c.checkpoint_every},
    };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("model").get_to(c.model);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("batch_size").get_to(c.batch_size);
    j.at("max_steps").get_to(c.max_steps);
    j.at("seed").get_to(c.seed);
    j.at("adam").at("beta1").get_to(c.adam.beta1);
    j.at("adam").at("beta2").get_to(c.adam.beta2);
    j.at("adam").at("epsilon").get_to(c.adam.epsilon);
    j.at("freeze_gamma").get_to(c.freeze_gamma);
    j.at("clip_norm").get_to(c.clip_norm);
    j.at("eval_every").get_to(c.eval_every);
    j.at("checkpoint_every").get_to(c.checkpoint_every);
}

// --- Checkpoint I/O -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'C', 'E', 'C'};
constexpr std::uint64_t kMaxElements = std::numeric_limits<std::int32_t>::max();

class Writer {
 public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    template <typename U>
    void le(U value) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
    void blob32(const std::string& s) {
        if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw CheckpointError("blob too large");
        le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> out;
};

class Reader {
 public:
    Reader(std::span<const std::uint8_t> data, const std::string& origin) : data_(data), origin_(origin) {}

    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) {
            throw CheckpointError(origin_ + ": truncated checkpoint while reading " + what + " at byte " +
                                  std::to_string(pos_));
        }
    }
    template <typename U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(U);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t pos() const { return pos_; }
    const std::string& origin() const { return origin_; }

 private:
    std::span<const std::uint8_t> data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>* Checkpoint::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t.tensor;
    }
    return nullptr;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint32_t>(Checkpoint::kVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw CheckpointError("tensor name too long: " + name.substr(0, 64) + "...");
        }
        w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        if (tensor.rank() > 255) throw CheckpointError("tensor rank above 255: " + name);
        w.le<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
        for (int d : tensor.dims()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (float f : tensor.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(f));
    }
    w.le<std::uint64_t>(ckpt.step);
    w.blob32(ckpt.rng_state);
    w.blob32(ckpt.config.dump());
    return std::move(w.out);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (std::memcmp(bytes.data(), kMagic, std::min<std::size_t>(bytes.size(), 4)) != 0) {
        throw CheckpointError(origin + ": bad magic, expected \"DCEC\"");
    }
    r.str(4, "magic \"DCEC\"");
    const auto version = r.le<std::uint32_t>("version");
    if (version != Checkpoint::kVersion) {
        throw CheckpointError(origin + ": unsupported checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(Checkpoint::kVersion));
    }
    Checkpoint ckpt;
    const auto count = r.le<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.le<std::uint16_t>("tensor name length");
        std::string name = r.str(len, "tensor name");
        const auto rank = r.le<std::uint8_t>("tensor rank");
        if (rank == 0) throw CheckpointError(origin + ": tensor '" + name + "' has rank 0");
        Shape dims;
        std::uint64_t numel = 1;
        for (int k = 0; k < rank; ++k) {
            const auto d = r.le<std::uint32_t>("tensor dims");
            if (d == 0) throw CheckpointError(origin + ": tensor '" + name + "' has a zero dim");
            numel *= d;
            // Checked per dim so the product itself cannot wrap.
            if (numel > kMaxElements) {
                throw CheckpointError(origin + ": dim overflow in tensor '" + name + "': more than " +
                                      std::to_string(kMaxElements) + " elements");
            }
            dims.push_back(static_cast<int>(d));
        }
        r.need(numel * 4, "tensor data");
        std::vector<float> data(numel);
        for (auto& f : data) f = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
        ckpt.tensors.push_back({std::move(name), Tensor<float>(std::move(dims), std::move(data))});
    }
    ckpt.step = r.le<std::uint64_t>("step counter");
    ckpt.rng_state = r.str(r.le<std::uint32_t>("rng state length"), "rng state");
    const std::string config = r.str(r.le<std::uint32_t>("config length"), "config");
    if (r.remaining() != 0) {
        throw CheckpointError(origin + ": " + std::to_string(r.remaining()) + " trailing bytes after config");
    }
    try {
        ckpt.config = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(origin + ": malformed config JSON: " + e.what());
    }
    return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, path.string());
}

namespace {

void copy_into(Tensor<float>& dst, const Tensor<float>& src, const std::string& name) {
    if (dst.dims() != src.dims()) {
        throw CheckpointError("tensor '" + name + "' has dims " + shape_str(src.dims()) + ", model expects " +
                              shape_str(dst.dims()));
    }
    std::ranges::copy(src.data(), dst.mutable_data().begin());
}

TrainConfig config_of(const Checkpoint& ckpt) {
    try {
        return ckpt.config.get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint config snapshot is incomplete: ") + e.what());
    }
}

}  // namespace

DCEModel<float> restore_model(const Checkpoint& ckpt) {
    const TrainConfig config = config_of(ckpt);
    DCEModel<float> model(config.model);
    model.gamma().set_frozen(config.freeze_gamma);
    for (auto& p : model.parameters()) {
        const Tensor<float>* src = ckpt.find(p.name);
        if (!src) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
        copy_into(p.tensor, *src, p.name);
    }
    return model;
}

GammaConfig gamma_config_of(const Checkpoint& source) {
    try {
        ModelConfig m;
        source.config.at("model").get_to(m);
        return m.gamma;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint has no extractor layout: ") + e.what());
    }
}

void import_gamma(DCEModel<float>& model, const Checkpoint& source) {
    for (auto& p : model.gamma().parameters()) {
        const Tensor<float>* src = source.find(p.name);
        if (!src) throw CheckpointError("imported weights lack '" + p.name + "'");
        copy_into(p.tensor, *src, p.name);
    }
}

void write_loss_csv(const fs::path& path, const std::vector<LossRecord>& history) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << "step,loss_total,loss_cropper,loss_enhancer\n" << std::setprecision(9);
    for (const auto& r : history) out << r.step << ',' << r.total << ',' << r.cropper << ',' << r.enhancer << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

// --- Trainer ------------------------------------------------------------------

namespace {

ModelConfig seeded(ModelConfig m, std::uint64_t seed) {
    m.seed = seed;
    return m;
}

Tensor<float> image_tensor(const ImageRGB& img, int size) {
    if (img.height() == size && img.width() == size) return img.to_tensor<float>();
    return resize_bilinear(img, size, size).to_tensor<float>();
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const Manifest& manifest)
    : config_(config), model_((config.validate(), seeded(config.model, config.seed))) {
    config_.model.seed = config_.seed;
    model_.gamma().set_frozen(config_.freeze_gamma);
    trainable_ = model_.trainable_parameters();
    for (const auto& p : trainable_) {
        m_.emplace_back(p.tensor.dims());
        v_.emplace_back(p.tensor.dims());
    }
    shuffle_rng_ = Rng(config_.seed).split("shuffle");
    load(manifest);
}

Trainer::Trainer(const Checkpoint& ckpt, const Manifest& manifest)
    : config_(config_of(ckpt)), model_(restore_model(ckpt)) {
    trainable_ = model_.trainable_parameters();
    for (const auto& p : trainable_) {
        const Tensor<float>* m = ckpt.find("adam.m." + p.name);
        const Tensor<float>* v = ckpt.find("adam.v." + p.name);
        if (!m || !v) throw CheckpointError("checkpoint lacks optimizer moments for '" + p.name + "'");
        m_.emplace_back(p.tensor.dims());
        v_.emplace_back(p.tensor.dims());
        copy_into(m_.back(), *m, "adam.m." + p.name);
        copy_into(v_.back(), *v, "adam.v." + p.name);
    }
    step_ = static_cast<std::int64_t>(ckpt.step);
    shuffle_rng_.set_state(ckpt.rng_state);
    load(manifest);
}

void Trainer::load(const Manifest& manifest) {
    if (manifest.records.empty()) throw std::invalid_argument("training manifest is empty");
    const int s = config_.model.input_size;
    const int r = config_.model.enhancer.scale;
    samples_.assign(manifest.records.size(), Sample{});
    parallel_for(samples_.size(), [&](std::size_t i) {
        const SampleRecord& rec = manifest.records[i];
        Sample& out = samples_[i];
        out.id = rec.id;
        out.photo = image_tensor(read_png(manifest.resolve(rec.photo_path)), s);
        out.gt = image_tensor(read_png(manifest.resolve(rec.gt_path)), s);
        if (config_.model.enhancer_enabled) {
            out.gt_hr = image_tensor(read_png(manifest.resolve(rec.gt_hr_path)), s * r);
        }
    });
    refresh_features();
    spdlog::info("loaded {} training samples at {}x{}", samples_.size(), s, s);
}

void Trainer::refresh_features() {
    if (!config_.freeze_gamma) return;
    const int r = config_.model.enhancer.scale;
    const auto& gamma = model_.gamma();
    parallel_for(samples_.size(), [&](std::size_t i) {
        Sample& smp = samples_[i];
        Tape<float> scratch;
        smp.photo_features = gamma.forward(scratch, smp.photo).detach();
        smp.gt_features = gamma.forward(scratch, smp.gt).detach();
        if (smp.gt_hr.defined()) smp.gt_hr_features = hr_features(gamma, smp.gt_hr, r);
    });
}

std::size_t Trainer::sample_index(std::int64_t k) {
    const auto n = static_cast<std::int64_t>(samples_.size());
    const std::int64_t epoch = k / n;
    if (epoch != epoch_) {
        // Fisher-Yates with a stream keyed by the epoch, so the order depends
        // only on (seed, epoch) and resumed runs see the same batches.
        order_.resize(samples_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        Rng rng = shuffle_rng_.split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
        epoch_ = epoch;
    }
    return order_[static_cast<std::size_t>(k % n)];
}

LossTerms<float> Trainer::sample_loss(Tape<float>& tape, const Sample& s) const {
    const int r = config_.model.enhancer.scale;
    const bool cached = config_.freeze_gamma;
    const ModelOutputs<float> out = model_.forward(tape, s.photo, cached ? &s.photo_features : nullptr);
    Tensor<float> gt_f = s.gt_features, gt_hr_f = s.gt_hr_features;
    if (!cached) {
        gt_f = [&] {
            Tape<float> scratch;
            return model_.gamma().forward(scratch, s.gt).detach();
        }();
        if (s.gt_hr.defined()) gt_hr_f = hr_features(model_.gamma(), s.gt_hr, r);
    }
    return total_loss(tape, model_, out, gt_f, gt_hr_f);
}

LossRecord Trainer::step() {
    const std::int64_t b = config_.batch_size;
    const float seed = 1.0f / static_cast<float>(b);
    LossRecord rec;
    rec.step = step_ + 1;
    for (const auto& p : trainable_) p.tensor.zero_grad();
    // Samples run one after another so gradients accumulate in a fixed order.
    for (std::int64_t j = 0; j < b; ++j) {
        const Sample& s = samples_[sample_index(step_ * b + j)];
        Tape<float> tape;
        const LossTerms<float> terms = sample_loss(tape, s);
        const double lc = terms.cropper.item();
        const double le = terms.enhancer.defined() ? terms.enhancer.item() : 0.0;
        if (!std::isfinite(lc)) {
            throw TrainingError("non-finite L_C at step " + std::to_string(rec.step) + " (sample " + s.id + ")");
        }
        if (!std::isfinite(le)) {
            throw TrainingError("non-finite L_E at step " + std::to_string(rec.step) + " (sample " + s.id + ")");
        }
        tape.backward(terms.total, seed);
        rec.cropper += lc;
        rec.enhancer += le;
    }
    rec.cropper /= static_cast<double>(b);
    rec.enhancer /= static_cast<double>(b);
    rec.total = rec.cropper + rec.enhancer;

    clip_grad_norm(trainable_, config_.clip_norm);
    ++step_;
    for (std::size_t i = 0; i < trainable_.size(); ++i) {
        Tensor<float>& p = trainable_[i].tensor;
        std::vector<float> zeros;
        std::span<const float> g = p.grad();
        if (g.empty()) {
            zeros.assign(p.numel(), 0.0f);
            g = zeros;
        }
        adam_step<float>(p.mutable_data(), g, m_[i].mutable_data(), v_[i].mutable_data(),
                         config_.learning_rate, config_.adam, step_);
        p.zero_grad();
    }
    return rec;
}

LossRecord Trainer::evaluate() const {
    std::vector<LossRecord> per(samples_.size());
    parallel_for(samples_.size(), [&](std::size_t i) {
        Tape<float> tape;
        const LossTerms<float> terms = sample_loss(tape, samples_[i]);
        per[i].cropper = terms.cropper.item();
        per[i].enhancer = terms.enhancer.defined() ? terms.enhancer.item() : 0.0;
    });
    LossRecord mean;
    mean.step = step_;
    for (const auto& p : per) {
        mean.cropper += p.cropper;
        mean.enhancer += p.enhancer;
    }
    mean.cropper /= static_cast<double>(per.size());
    mean.enhancer /= static_cast<double>(per.size());
    mean.total = mean.cropper + mean.enhancer;
    return mean;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.config = config_;
    for (const auto& p : model_.parameters()) ckpt.tensors.push_back({p.name, p.tensor.detach()});
    for (std::size_t i = 0; i < trainable_.size(); ++i) {
        ckpt.tensors.push_back({"adam.m." + trainable_[i].name, m_[i].detach()});
    }
    for (std::size_t i = 0; i < trainable_.size(); ++i) {
        ckpt.tensors.push_back({"adam.v." + trainable_[i].name, v_[i].detach()});
    }
    ckpt.step = static_cast<std::uint64_t>(step_);
    ckpt.rng_state = shuffle_rng_.state();
    return ckpt;
}

TrainResult train_loop(const TrainConfig& config, const Manifest& manifest, const fs::path& out_dir,
                       const TrainLoopOptions& options) {
    Trainer trainer(config, manifest);
    if (options.gamma_source) {
        import_gamma(trainer.model(), *options.gamma_source);
        trainer.refresh_features();
    }
    TrainResult result;
    fs::create_directories(out_dir);
    for (int s = 0; s < config.max_steps; ++s) {
        const LossRecord rec = trainer.step();
        result.history.push_back(rec);
        if (options.on_step) options.on_step(rec);
        if (options.log_every > 0 && (rec.step % options.log_every == 0 || rec.step == config.max_steps)) {
            spdlog::info("step {}/{} loss {:.6f} (L_C {:.6f}, L_E {:.6f})", rec.step, config.max_steps, rec.total,
                         rec.cropper, rec.enhancer);
        }
        if (config.eval_every > 0 && rec.step % config.eval_every == 0) {
            const LossRecord e = trainer.evaluate();
            spdlog::info("step {}: mean L_C {:.6f}, mean L_E {:.6f}", rec.step, e.cropper, e.enhancer);
        }
        if (config.checkpoint_every > 0 && rec.step % config.checkpoint_every == 0) {
            std::ostringstream name;
            name << "checkpoint_" << std::setw(6) << std::setfill('0') << rec.step << ".dcec";
            save_checkpoint(out_dir / name.str(), trainer.checkpoint());
        }
    }
    result.checkpoint = trainer.checkpoint();
    save_checkpoint(out_dir / "checkpoint.dcec", result.checkpoint);
    write_loss_csv(out_dir / "loss.csv", result.history);
    return result;
}

Predictor model_predictor(const DCEModel<float>& model, const Manifest& manifest, int resolution) {
    if (manifest.records.empty()) throw std::invalid_argument("model_predictor: empty manifest");
    const int base = read_png(manifest.resolve(manifest.records.front().gt_path)).height();
    return [&model, &manifest, resolution, base](const SampleRecord& rec) {
        const Inference inf = run_inference(model, read_png(manifest.resolve(rec.photo_path)));
        const bool use_enhanced = resolution > base || model.enhancer().has_value();
        return match_resolution(use_enhanced ? inf.enhanced : inf.cropped, resolution);
    };
}

}  // namespace dce
