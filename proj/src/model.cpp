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

#include "dce/model.hpp"

#include <cmath>
#include <stdexcept>

namespace dce {

using detail::require;

GammaConfig GammaConfig::vgg19() {
    GammaConfig c;
    c.widths = {64, 128, 256, 512, 512};
    c.convs_per_block = {2, 2, 4, 4, 4};
    c.mean = {0.485, 0.456, 0.406};
    c.stddev = {0.229, 0.224, 0.225};
    return c;
}

CropperConfig CropperConfig::for_features(int feature_channels) {
    if (feature_channels >= 512) return {512, 128, 1000, 80};
    return {128, 32, 256, 80};
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (input_size < 32 || input_size % 32 != 0) {
        fail("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
    }
    if (n_croppers < 1) fail("n_croppers must be >= 1");
    if (gamma.widths.size() != 5 || gamma.convs_per_block.size() != 5) {
        fail("feature extractor needs exactly 5 blocks");
    }
    for (std::size_t i = 0; i < 5; ++i) {
        if (gamma.widths[i] < 1 || gamma.convs_per_block[i] < 1) fail("non-positive extractor width");
    }
    for (double s : gamma.stddev) {
        if (!(s > 0.0)) fail("normalization stddev must be positive");
    }
    if (cropper.n1 < 1 || cropper.n2 < 1 || cropper.d1 < 1 || cropper.d2 < 1) {
        fail("non-positive cropper width");
    }
    if (enhancer.features < 1 || enhancer.blocks < 0 || enhancer.scale < 1) {
        fail("invalid enhancer shape");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{
        {"input_size", c.input_size},
        {"n_croppers", c.n_croppers},
        {"enhancer_enabled", c.enhancer_enabled},
        {"deep_supervision", c.deep_supervision},
        {"seed", c.seed},
        {"gamma",
         {{"widths", c.gamma.widths},
          {"convs_per_block", c.gamma.convs_per_block},
          {"mean", c.gamma.mean},
          {"stddev", c.gamma.stddev}}},
        {"cropper", {{"n1", c.cropper.n1}, {"n2", c.cropper.n2}, {"d1", c.cropper.d1}, {"d2", c.cropper.d2}}},
        {"enhancer",
         {{"features", c.enhancer.features},
          {"blocks", c.enhancer.blocks},
          {"scale", c.enhancer.scale},
          {"residual_scale", c.enhancer.residual_scale}}},
    };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("input_size").get_to(c.input_size);
    j.at("n_croppers").get_to(c.n_croppers);
    j.at("enhancer_enabled").get_to(c.enhancer_enabled);
    j.at("deep_supervision").get_to(c.deep_supervision);
    j.at("seed").get_to(c.seed);
    const auto& g = j.at("gamma");
    g.at("widths").get_to(c.gamma.widths);
    g.at("convs_per_block").get_to(c.gamma.convs_per_block);
    g.at("mean").get_to(c.gamma.mean);
    g.at("stddev").get_to(c.gamma.stddev);
    const auto& h = j.at("cropper");
    h.at("n1").get_to(c.cropper.n1);
    h.at("n2").get_to(c.cropper.n2);
    h.at("d1").get_to(c.cropper.d1);
    h.at("d2").get_to(c.cropper.d2);
    const auto& e = j.at("enhancer");
    e.at("features").get_to(c.enhancer.features);
    e.at("blocks").get_to(c.enhancer.blocks);
    e.at("scale").get_to(c.enhancer.scale);
    e.at("residual_scale").get_to(c.enhancer.residual_scale);
}

std::string param_group(const std::string& name) {
    return name.substr(0, name.find('.'));
}

namespace {

/// Uniform Glorot/Xavier initialisation from the stream named after the tensor.
template <typename T>
Tensor<T> glorot(const Rng& rng, const std::string& name, Shape dims, int fan_in, int fan_out) {
    Rng r = rng.split(name);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t(std::move(dims));
    for (T& v : t.mutable_data()) v = static_cast<T>(r.uniform(-limit, limit));
    return t;
}

template <typename T>
Conv<T> make_conv(const Rng& rng, const std::string& name, int c_in, int c_out, int k) {
    Conv<T> c;
    c.weight = glorot<T>(rng, name + ".weight", Shape{c_out, c_in, k, k}, c_in * k * k, c_out * k * k);
    c.bias = Tensor<T>(Shape{c_out});
    return c;
}

template <typename T>
Conv<T> make_dense(const Rng& rng, const std::string& name, int n_in, int n_out) {
    Conv<T> c;
    c.weight = glorot<T>(rng, name + ".weight", Shape{n_out, n_in}, n_in, n_out);
    c.bias = Tensor<T>(Shape{n_out});
    return c;
}

template <typename T>
void push(std::vector<NamedParam<T>>& out, const std::string& name, const Conv<T>& c) {
    out.push_back({name + ".weight", c.weight});
    out.push_back({name + ".bias", c.bias});
}

}  // namespace

// --- Feature extractor ------------------------------------------------------

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const GammaConfig& config, int input_size, const Rng& rng)
    : config_(config), input_size_(input_size) {
    int c_in = 3;
    for (std::size_t b = 0; b < config.widths.size(); ++b) {
        std::vector<Conv<T>> convs;
        for (int k = 0; k < config.convs_per_block[b]; ++k) {
            const std::string name =
                "gamma.block" + std::to_string(b) + ".conv" + std::to_string(k);
            convs.push_back(make_conv<T>(rng, name, c_in, config.widths[b], 3));
            c_in = config.widths[b];
        }
        blocks_.push_back(std::move(convs));
    }
    const bool identity = config.mean == std::array<double, 3>{0, 0, 0} &&
                          config.stddev == std::array<double, 3>{1, 1, 1};
    if (!identity) {
        normalize_.weight = Tensor<T>(Shape{3, 3, 1, 1});
        normalize_.bias = Tensor<T>(Shape{3});
        auto w = normalize_.weight.mutable_data();
        auto b = normalize_.bias.mutable_data();
        for (int c = 0; c < 3; ++c) {
            w[c * 3 + c] = static_cast<T>(1.0 / config.stddev[c]);
            b[c] = static_cast<T>(-config.mean[c] / config.stddev[c]);
        }
    }
    set_frozen(true);
}

template <typename T>
void FeatureExtractor<T>::set_frozen(bool frozen) {
    frozen_ = frozen;
    for (auto& block : blocks_) {
        for (auto& c : block) {
            c.weight.set_requires_grad(!frozen);
            c.bias.set_requires_grad(!frozen);
        }
    }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::forward(Tape<T>& tape, const Tensor<T>& image) const {
    require(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == input_size_ &&
                image.dim(2) == input_size_,
            "feature extractor expects [3," + std::to_string(input_size_) + "," +
                std::to_string(input_size_) + "], got " + shape_str(image.dims()));
    Tensor<T> x = image;
    if (normalize_.weight.defined()) x = conv2d(tape, x, normalize_.weight, normalize_.bias);
    for (const auto& block : blocks_) {
        for (const auto& c : block) x = relu(tape, conv2d(tape, x, c.weight, c.bias, 1, Padding::kSame));
        x = maxpool2d(tape, x, 2);
    }
    return x;
}

template <typename T>
std::vector<NamedParam<T>> FeatureExtractor<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        for (std::size_t k = 0; k < blocks_[b].size(); ++k) {
            push(out, "gamma.block" + std::to_string(b) + ".conv" + std::to_string(k), blocks_[b][k]);
        }
    }
    return out;
}

// --- Cropper head -------------------------------------------------------------

template <typename T>
CropperHead<T>::CropperHead(const CropperConfig& config, int feature_channels, int feature_size,
                            const std::string& name, const Rng& rng)
    : name_(name) {
    conv1_ = make_conv<T>(rng, name + ".conv1", feature_channels, config.n1, 2);
    conv2_ = make_conv<T>(rng, name + ".conv2", config.n1, config.n2, 1);
    const int flat = feature_size * feature_size * config.n2;
    fc1_ = make_dense<T>(rng, name + ".fc1", flat, config.d1);
    fc2_ = make_dense<T>(rng, name + ".fc2", config.d1, config.d2);
    // Zero weights and an identity bias: the untrained head outputs the identity transform.
    fc3_.weight = Tensor<T>(Shape{6, config.d2});
    fc3_.bias = AffineParams::identity().to_tensor<T>();
    for (auto* c : {&conv1_, &conv2_, &fc1_, &fc2_, &fc3_}) {
        c->weight.set_requires_grad(true);
        c->bias.set_requires_grad(true);
    }
}

template <typename T>
Tensor<T> CropperHead<T>::forward(Tape<T>& tape, const Tensor<T>& features) const {
    Tensor<T> x = relu(tape, conv2d(tape, features, conv1_.weight, conv1_.bias, 1, Padding::kSame));
    x = relu(tape, conv2d(tape, x, conv2_.weight, conv2_.bias));
    x = flatten(tape, x);
    x = relu(tape, linear(tape, x, fc1_.weight, fc1_.bias));
    x = relu(tape, linear(tape, x, fc2_.weight, fc2_.bias));
    return linear(tape, x, fc3_.weight, fc3_.bias);
}

template <typename T>
std::vector<NamedParam<T>> CropperHead<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    push(out, name_ + ".conv1", conv1_);
    push(out, name_ + ".conv2", conv2_);
    push(out, name_ + ".fc1", fc1_);
    push(out, name_ + ".fc2", fc2_);
    push(out, name_ + ".fc3", fc3_);
    return out;
}

// --- Enhancer ---------------------------------------------------------------

template <typename T>
Enhancer<T>::Enhancer(const EnhancerConfig& config, const Rng& rng) : config_(config) {
    const int f = config.features;
    const int r = config.scale;
    head_ = make_conv<T>(rng, "enhancer.head", 3, f, 3);
    for (int b = 0; b < config.blocks; ++b) {
        const std::string name = "enhancer.block" + std::to_string(b);
        blocks_.push_back({make_conv<T>(rng, name + ".conv1", f, f, 3),
                           make_conv<T>(rng, name + ".conv2", f, f, 3)});
    }
    upsample_ = make_conv<T>(rng, "enhancer.upsample", f, f * r * r, 3);
    tail_ = make_conv<T>(rng, "enhancer.tail", f, 3, 3);
    for (auto& p : parameters()) p.tensor.set_requires_grad(true);
}

template <typename T>
Tensor<T> Enhancer<T>::forward(Tape<T>& tape, const Tensor<T>& image) const {
    require(image.rank() == 3 && image.dim(0) == 3,
            "enhancer expects a [3,H,W] image, got " + shape_str(image.dims()));
    const T rs = static_cast<T>(config_.residual_scale);
    Tensor<T> x = conv2d(tape, image, head_.weight, head_.bias, 1, Padding::kSame);
    for (const auto& block : blocks_) {
        Tensor<T> y = relu(tape, conv2d(tape, x, block[0].weight, block[0].bias, 1, Padding::kSame));
        y = conv2d(tape, y, block[1].weight, block[1].bias, 1, Padding::kSame);
        x = add(tape, x, scale(tape, y, rs));
    }
    x = conv2d(tape, x, upsample_.weight, upsample_.bias, 1, Padding::kSame);
    if (config_.scale > 1) x = pixel_shuffle(tape, x, config_.scale);
    return conv2d(tape, x, tail_.weight, tail_.bias, 1, Padding::kSame);
}

template <typename T>
std::vector<NamedParam<T>> Enhancer<T>::parameters() const {
    std::vector<NamedParam<T>> out;
    push(out, "enhancer.head", head_);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const std::string name = "enhancer.block" + std::to_string(b);
        push(out, name + ".conv1", blocks_[b][0]);
        push(out, name + ".conv2", blocks_[b][1]);
    }
    push(out, "enhancer.upsample", upsample_);
    push(out, "enhancer.tail", tail_);
    return out;
}

// --- Full model ---------------------------------------------------------------

template <typename T>
DCEModel<T>::DCEModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const Rng rng(config_.seed);
    gamma_ = FeatureExtractor<T>(config_.gamma, config_.input_size, rng);
    for (int i = 0; i < config_.n_croppers; ++i) {
        croppers_.emplace_back(config_.cropper, config_.gamma.feature_channels(),
                               config_.feature_size(), "cropper" + std::to_string(i), rng);
    }
    if (config_.enhancer_enabled) enhancer_.emplace(config_.enhancer, rng);
}

template <typename T>
CropStage<T> DCEModel<T>::cropper_forward(Tape<T>& tape, const Tensor<T>& photo, std::size_t head,
                                          const Tensor<T>* photo_features) const {
    const Tensor<T> features = photo_features ? *photo_features : gamma_.forward(tape, photo);
    CropStage<T> stage;
    stage.theta = croppers_.at(head).forward(tape, features);
    const int s = config_.input_size;
    stage.image = grid_sample(tape, photo, affine_grid(tape, stage.theta, s, s));
    return stage;
}

template <typename T>
std::vector<CropStage<T>> DCEModel<T>::stacked_forward(Tape<T>& tape, const Tensor<T>& photo,
                                                       const Tensor<T>* photo_features) const {
    std::vector<CropStage<T>> stages;
    Tensor<T> current = photo;
    for (std::size_t i = 0; i < croppers_.size(); ++i) {
        stages.push_back(cropper_forward(tape, current, i, i == 0 ? photo_features : nullptr));
        current = stages.back().image;
    }
    return stages;
}

template <typename T>
ModelOutputs<T> DCEModel<T>::forward(Tape<T>& tape, const Tensor<T>& photo,
                                     const Tensor<T>* photo_features) const {
    ModelOutputs<T> out;
    out.stages = stacked_forward(tape, photo, photo_features);
    if (enhancer_) out.enhanced = enhancer_->forward(tape, out.cropped());
    return out;
}

template <typename T>
std::vector<NamedParam<T>> DCEModel<T>::parameters() const {
    std::vector<NamedParam<T>> out = gamma_.parameters();
    for (const auto& c : croppers_) {
        for (auto& p : c.parameters()) out.push_back(std::move(p));
    }
    if (enhancer_) {
        for (auto& p : enhancer_->parameters()) out.push_back(std::move(p));
    }
    return out;
}

template <typename T>
std::vector<NamedParam<T>> DCEModel<T>::trainable_parameters() const {
    std::vector<NamedParam<T>> out;
    for (auto& p : parameters()) {
        if (p.tensor.requires_grad()) out.push_back(std::move(p));
    }
    return out;
}

// --- Losses -----------------------------------------------------------------

template <typename T>
CosineResult<T> cosine_distance(Tape<T>& tape, const Tensor<T>& f, const Tensor<T>& g) {
    require(f.numel() == g.numel(), "cosine_distance: feature sizes " + shape_str(f.dims()) +
                                        " and " + shape_str(g.dims()) + " differ");
    double dot = 0, ff = 0, gg = 0;
    const auto a = f.data();
    const auto b = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        ff += static_cast<double>(a[i]) * a[i];
        gg += static_cast<double>(b[i]) * b[i];
    }
    const double nf = std::sqrt(ff), ng = std::sqrt(gg);
    CosineResult<T> result;
    result.degenerate = nf == 0.0 || ng == 0.0;
    const double denom = std::max(nf * ng, 1e-12);
    const bool floored = nf * ng < 1e-12;
    result.loss = Tensor<T>::scalar(result.degenerate ? T(1) : static_cast<T>(1.0 - dot / denom));
    if (Tape<T>::needs_grad({&f, &g})) {
        const bool degenerate = result.degenerate;
        tape.record({f, g}, result.loss,
                    [f, g, out = result.loss, dot, ff, gg, denom, floored, degenerate]() mutable {
                        if (degenerate) return;  // constant loss
                        const double go = static_cast<double>(out.grad()[0]);
                        const auto a = f.data();
                        const auto b = g.data();
                        // d/da (1 - <a,b>/(|a||b|)) = -(b/D - <a,b> a / (|a|^2 D)).
                        const double ca = floored ? 0.0 : dot / ff;
                        const double cb = floored ? 0.0 : dot / gg;
                        if (f.requires_grad()) {
                            auto d = f.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) {
                                d[i] += static_cast<T>(-go * (b[i] - ca * a[i]) / denom);
                            }
                        }
                        if (g.requires_grad()) {
                            auto d = g.grad_buffer();
                            for (std::size_t i = 0; i < d.size(); ++i) {
                                d[i] += static_cast<T>(-go * (a[i] - cb * b[i]) / denom);
                            }
                        }
                    });
    }
    return result;
}

template <typename T>
Tensor<T> feature_mse(Tape<T>& tape, const Tensor<T>& f, const Tensor<T>& g) {
    require(f.numel() == g.numel(), "feature_mse: feature sizes " + shape_str(f.dims()) + " and " +
                                        shape_str(g.dims()) + " differ");
    const auto a = f.data();
    const auto b = g.data();
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    const double n = static_cast<double>(a.size());
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s / n));
    if (Tape<T>::needs_grad({&f, &g})) {
        tape.record({f, g}, out, [f, g, out, n]() mutable {
            const double k = 2.0 * static_cast<double>(out.grad()[0]) / n;
            const auto a = f.data();
            const auto b = g.data();
            if (f.requires_grad()) {
                auto d = f.grad_buffer();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += static_cast<T>(k * (a[i] - b[i]));
            }
            if (g.requires_grad()) {
                auto d = g.grad_buffer();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] -= static_cast<T>(k * (a[i] - b[i]));
            }
        });
    }
    return out;
}

template <typename T>
CosineResult<T> cropper_loss(Tape<T>& tape, const FeatureExtractor<T>& gamma,
                             const Tensor<T>& cropped, const Tensor<T>& gt_features) {
    return cosine_distance(tape, gamma.forward(tape, cropped), gt_features);
}

template <typename T>
Tensor<T> enhancer_loss(Tape<T>& tape, const FeatureExtractor<T>& gamma, const Tensor<T>& enhanced,
                        const Tensor<T>& gt_hr_features, int scale) {
    require(enhanced.rank() == 3 && enhanced.dim(1) == gamma.input_size() * scale &&
                enhanced.dim(2) == gamma.input_size() * scale,
            "enhancer_loss: enhanced image " + shape_str(enhanced.dims()) +
                " does not match extractor size x" + std::to_string(scale));
    const Tensor<T> pooled = scale > 1 ? avgpool2d(tape, enhanced, scale) : enhanced;
    return feature_mse(tape, gamma.forward(tape, pooled), gt_hr_features);
}

template <typename T>
Tensor<T> hr_features(const FeatureExtractor<T>& gamma, const Tensor<T>& gt_hr, int scale) {
    Tape<T> scratch;
    const Tensor<T> pooled = scale > 1 ? avgpool2d(scratch, gt_hr.detach(), scale) : gt_hr.detach();
    return gamma.forward(scratch, pooled).detach();
}

template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, const DCEModel<T>& model, const ModelOutputs<T>& outputs,
                        const Tensor<T>& gt_features, const Tensor<T>& gt_hr_features) {
    LossTerms<T> terms;
    const auto& stages = outputs.stages;
    const std::size_t first = model.config().deep_supervision ? 0 : stages.size() - 1;
    for (std::size_t i = first; i < stages.size(); ++i) {
        CosineResult<T> lc = cropper_loss(tape, model.gamma(), stages[i].image, gt_features);
        terms.degenerate = terms.degenerate || lc.degenerate;
        terms.cropper = terms.cropper.defined() ? add(tape, terms.cropper, lc.loss) : lc.loss;
    }
    terms.total = terms.cropper;
    if (outputs.enhanced.defined()) {
        terms.enhancer = enhancer_loss(tape, model.gamma(), outputs.enhanced, gt_hr_features,
                                       model.config().enhancer.scale);
        terms.total = add(tape, terms.cropper, terms.enhancer);
    }
    return terms;
}

#define DCE_INSTANTIATE_MODEL(T)                                                                  \
    template class FeatureExtractor<T>;                                                           \
    template class CropperHead<T>;                                                                \
    template class Enhancer<T>;                                                                   \
    template class DCEModel<T>;                                                                   \
    template CosineResult<T> cosine_distance(Tape<T>&, const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> feature_mse(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                 \
    template CosineResult<T> cropper_loss(Tape<T>&, const FeatureExtractor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&);                                      \
    template Tensor<T> enhancer_loss(Tape<T>&, const FeatureExtractor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>&, int);                                      \
    template Tensor<T> hr_features(const FeatureExtractor<T>&, const Tensor<T>&, int);            \
    template LossTerms<T> total_loss(Tape<T>&, const DCEModel<T>&, const ModelOutputs<T>&,        \
                                     const Tensor<T>&, const Tensor<T>&);

DCE_INSTANTIATE_MODEL(float)
DCE_INSTANTIATE_MODEL(double)

Inference run_inference(const DCEModel<float>& model, const ImageRGB& photo) {
    const int s = model.config().input_size;
    const ImageRGB input = photo.height() == s && photo.width() == s ? photo : resize_bilinear(photo, s, s);
    Tape<float> tape;
    const ModelOutputs<float> out = model.forward(tape, input.to_tensor<float>());
    Inference inf;
    for (const auto& st : out.stages) {
        inf.affines.push_back(AffineParams::from_tensor(st.theta));
        inf.composed = compose_affine(inf.composed, inf.affines.back());
    }
    inf.cropped = ImageRGB::from_tensor(out.cropped());
    const int r = model.config().enhancer.scale;
    inf.enhanced = out.enhanced.defined() ? ImageRGB::from_tensor(out.enhanced)
                                          : resize_bilinear(inf.cropped, s * r, s * r);
    return inf;
}

}  // namespace dce
