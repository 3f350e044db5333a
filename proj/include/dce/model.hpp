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

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dce/ops.hpp"
#include "dce/rng.hpp"
#include "dce/tensor.hpp"
#include "dce/warp.hpp"

namespace dce {

/// Frozen convolutional feature extractor: five blocks of
/// (3x3 conv + ReLU) x n followed by a 2x2 max pool.
struct GammaConfig {
    std::vector<int> widths{16, 32, 64, 64, 64};
    std::vector<int> convs_per_block{1, 1, 1, 1, 1};
    /// Per-channel input normalization (x - mean) / std, identity by default.
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};

    int feature_channels() const { return widths.back(); }
    static GammaConfig vgg19();
};

/// Cropper head widths: conv1 (2x2, n1), conv2 (1x1, n2), fc1 -> d1, fc2 -> d2, fc3 -> 6.
struct CropperConfig {
    int n1 = 128;
    int n2 = 32;
    int d1 = 256;
    int d2 = 80;

    /// 512/128/1000/80 for 512 feature channels, the scaled-down widths otherwise.
    static CropperConfig for_features(int feature_channels);
};

struct EnhancerConfig {
    int features = 64;
    int blocks = 8;
    int scale = 2;
    double residual_scale = 0.1;
};

struct ModelConfig {
    int input_size = 224;
    int n_croppers = 1;
    bool enhancer_enabled = true;
    /// Adds a cropper loss on every intermediate cropper output.
    bool deep_supervision = false;
    std::uint64_t seed = 0;
    GammaConfig gamma;
    CropperConfig cropper;
    EnhancerConfig enhancer;

    /// Spatial extent of the feature map (input_size / 32).
    int feature_size() const { return input_size / 32; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
struct Conv {
    Tensor<T> weight;
    Tensor<T> bias;
};

template <typename T>
class FeatureExtractor {
 public:
    FeatureExtractor() = default;
    FeatureExtractor(const GammaConfig& config, int input_size, const Rng& rng);

    /// [3, S, S] -> [C_f, S/32, S/32].
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& image) const;

    bool frozen() const { return frozen_; }
    void set_frozen(bool frozen);
    int input_size() const { return input_size_; }
    const GammaConfig& config() const { return config_; }
    std::vector<NamedParam<T>> parameters() const;

 private:
    GammaConfig config_;
    int input_size_ = 0;
    bool frozen_ = false;
    std::vector<std::vector<Conv<T>>> blocks_;
    Conv<T> normalize_;  // 1x1 diagonal conv, undefined when identity
};

template <typename T>
class CropperHead {
 public:
    CropperHead() = default;
    CropperHead(const CropperConfig& config, int feature_channels, int feature_size,
                const std::string& name, const Rng& rng);

    /// Gamma features -> 6 affine parameters.
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& features) const;

    const std::string& name() const { return name_; }
    std::vector<NamedParam<T>> parameters() const;
    int flatten_width() const { return fc1_.weight.dim(1); }

 private:
    std::string name_;
    Conv<T> conv1_, conv2_, fc1_, fc2_, fc3_;
};

template <typename T>
class Enhancer {
 public:
    Enhancer() = default;
    Enhancer(const EnhancerConfig& config, const Rng& rng);

    /// [3, h, w] -> [3, h*r, w*r]; no input-to-output skip.
    Tensor<T> forward(Tape<T>& tape, const Tensor<T>& image) const;

    const EnhancerConfig& config() const { return config_; }
    void set_residual_scale(double s) { config_.residual_scale = s; }
    std::vector<NamedParam<T>> parameters() const;

 private:
    EnhancerConfig config_;
    Conv<T> head_, upsample_, tail_;
    std::vector<std::array<Conv<T>, 2>> blocks_;
};

template <typename T>
struct CropStage {
    Tensor<T> theta;  // 6 affine parameters
    Tensor<T> image;  // resampled crop
};

template <typename T>
struct ModelOutputs {
    std::vector<CropStage<T>> stages;
    Tensor<T> enhanced;  // undefined without an enhancer
    const Tensor<T>& cropped() const { return stages.back().image; }
};

/// Stacked croppers followed by an optional enhancer.
template <typename T>
class DCEModel {
 public:
    explicit DCEModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const FeatureExtractor<T>& gamma() const { return gamma_; }
    FeatureExtractor<T>& gamma() { return gamma_; }
    const std::vector<CropperHead<T>>& croppers() const { return croppers_; }
    const std::optional<Enhancer<T>>& enhancer() const { return enhancer_; }
    std::optional<Enhancer<T>>& enhancer() { return enhancer_; }

    /// (theta, crop) of one head applied to `photo`. Pass precomputed
    /// features of `photo` to skip the extractor.
    CropStage<T> cropper_forward(Tape<T>& tape, const Tensor<T>& photo, std::size_t head,
                                 const Tensor<T>* photo_features = nullptr) const;
    /// Chains every head, each one consuming the previous crop.
    std::vector<CropStage<T>> stacked_forward(Tape<T>& tape, const Tensor<T>& photo,
                                              const Tensor<T>* photo_features = nullptr) const;
    ModelOutputs<T> forward(Tape<T>& tape, const Tensor<T>& photo,
                            const Tensor<T>* photo_features = nullptr) const;

    /// All parameters, extractor first, in a stable order.
    std::vector<NamedParam<T>> parameters() const;
    /// Parameters that receive optimizer updates.
    std::vector<NamedParam<T>> trainable_parameters() const;

 private:
    ModelConfig config_;
    FeatureExtractor<T> gamma_;
    std::vector<CropperHead<T>> croppers_;
    std::optional<Enhancer<T>> enhancer_;
};

/// Name of the group a parameter belongs to ("gamma", "cropper0", "enhancer", ...).
std::string param_group(const std::string& name);

// --- Losses -------------------------------------------------------------------

template <typename T>
struct CosineResult {
    Tensor<T> loss;
    /// Either feature vector had zero norm; loss is the constant 1.
    bool degenerate = false;
};

/// 1 - <f,g> / max(|f| |g|, 1e-12) over flattened features.
template <typename T>
CosineResult<T> cosine_distance(Tape<T>& tape, const Tensor<T>& f, const Tensor<T>& g);

/// mean((f - g)^2).
template <typename T>
Tensor<T> feature_mse(Tape<T>& tape, const Tensor<T>& f, const Tensor<T>& g);

template <typename T>
CosineResult<T> cropper_loss(Tape<T>& tape, const FeatureExtractor<T>& gamma,
                             const Tensor<T>& cropped, const Tensor<T>& gt_features);

/// Pools `enhanced` by `scale` to the extractor size, then feature MSE.
template <typename T>
Tensor<T> enhancer_loss(Tape<T>& tape, const FeatureExtractor<T>& gamma, const Tensor<T>& enhanced,
                        const Tensor<T>& gt_hr_features, int scale);

/// Extractor features of a high-resolution target pooled to extractor size.
template <typename T>
Tensor<T> hr_features(const FeatureExtractor<T>& gamma, const Tensor<T>& gt_hr, int scale);

template <typename T>
struct LossTerms {
    Tensor<T> total;
    Tensor<T> cropper;
    Tensor<T> enhancer;  // undefined without an enhancer
    bool degenerate = false;
};

/// Cropper loss on the last stage (every stage with deep supervision) plus
/// enhancer loss when the model has an enhancer.
template <typename T>
LossTerms<T> total_loss(Tape<T>& tape, const DCEModel<T>& model, const ModelOutputs<T>& outputs,
                        const Tensor<T>& gt_features, const Tensor<T>& gt_hr_features);

/// Result of running a trained model on one photo.
struct Inference {
    std::vector<AffineParams> affines;  // one per cropper
    AffineParams composed;              // final output coords to photo coords
    ImageRGB cropped;
    /// Enhancer output, or the crop bilinearly upscaled when there is none.
    ImageRGB enhanced;
};

/// Resizes `photo` to the model input size when needed, then crops and enhances.
Inference run_inference(const DCEModel<float>& model, const ImageRGB& photo);

}  // namespace dce
