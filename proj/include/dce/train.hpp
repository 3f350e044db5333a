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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dce/metrics.hpp"
#include "dce/model.hpp"
#include "dce/synthgen.hpp"

namespace dce {

class TrainingError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One Adam update with bias correction at step t (1-based). Arithmetic is
/// done in double and rounded back to T.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
               double lr, const AdamOptions& options, std::int64_t t);

/// Rescales every gradient so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm);

struct TrainConfig {
    /// Architecture; n_croppers and enhancer_enabled live here.
    ModelConfig model;
    double learning_rate = 1e-4;
    int batch_size = 8;
    int max_steps = 1000;
    /// Drives parameter initialisation and batch order (overrides model.seed).
    std::uint64_t seed = 0;
    AdamOptions adam;
    bool freeze_gamma = true;
    double clip_norm = 10.0;
    /// Log the mean training-set loss every this many steps; 0 disables.
    int eval_every = 0;
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    int checkpoint_every = 0;

    /// Throws std::invalid_argument.
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct NamedTensor {
    std::string name;
    Tensor<float> tensor;
};

/// Everything needed to rebuild a model and resume its optimizer.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    nlohmann::json config;  // TrainConfig snapshot
    /// Model parameters, then "adam.m.<name>" and "adam.v.<name>" moments.
    std::vector<NamedTensor> tensors;
    std::uint64_t step = 0;
    std::string rng_state;

    /// nullptr when absent.
    const Tensor<float>* find(std::string_view name) const;
};

/// Binary layout: "DCEC", u32 version, u32 tensor count, then per tensor
/// u16 name length, name, u8 rank, u32 dims, f32 data; then u64 step,
/// u32 length + RNG state, u32 length + config JSON. All little-endian.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, version mismatch, truncation or
/// dims that overflow the file.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

/// Rebuilds the model stored in `ckpt`; every parameter must be present.
DCEModel<float> restore_model(const Checkpoint& ckpt);

/// Extractor layout recorded in a checkpoint (for importing its weights).
GammaConfig gamma_config_of(const Checkpoint& source);
/// Copies every "gamma.*" tensor of `source` into the model's extractor.
void import_gamma(DCEModel<float>& model, const Checkpoint& source);

struct LossRecord {
    std::int64_t step = 0;
    double total = 0.0;
    double cropper = 0.0;
    double enhancer = 0.0;
};

/// Writes "step,loss_total,loss_cropper,loss_enhancer" and one row per record.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

/// Mini-batch Adam training over an in-memory copy of the manifest.
class Trainer {
 public:
    Trainer(const TrainConfig& config, const Manifest& manifest);
    /// Resumes from `ckpt`, whose config snapshot replaces any other settings.
    Trainer(const Checkpoint& ckpt, const Manifest& manifest);

    /// One optimizer step; returns the batch-mean losses.
    LossRecord step();
    /// Mean losses over every loaded sample with the current parameters.
    LossRecord evaluate() const;

    std::int64_t steps_taken() const { return step_; }
    const TrainConfig& config() const { return config_; }
    const DCEModel<float>& model() const { return model_; }
    DCEModel<float>& model() { return model_; }
    std::size_t sample_count() const { return samples_.size(); }
    /// Recomputes cached extractor features, e.g. after import_gamma.
    void refresh_features();

    Checkpoint checkpoint() const;

 private:
    struct Sample {
        std::string id;
        Tensor<float> photo, gt, gt_hr;
        Tensor<float> photo_features, gt_features, gt_hr_features;
    };

    void load(const Manifest& manifest);
    std::size_t sample_index(std::int64_t k);
    LossTerms<float> sample_loss(Tape<float>& tape, const Sample& s) const;

    TrainConfig config_;
    DCEModel<float> model_;
    std::vector<NamedParam<float>> trainable_;
    std::vector<Tensor<float>> m_, v_;
    std::vector<Sample> samples_;
    std::int64_t step_ = 0;
    Rng shuffle_rng_;
    std::int64_t epoch_ = -1;
    std::vector<std::size_t> order_;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossRecord> history;
};

struct TrainLoopOptions {
    /// Called after every step.
    std::function<void(const LossRecord&)> on_step;
    /// Extractor weights to import before the first step.
    const Checkpoint* gamma_source = nullptr;
    /// Info log every this many steps; 0 disables.
    int log_every = 50;
};

/// Runs config.max_steps steps, writing checkpoint.dcec and loss.csv to
/// out_dir. Throws TrainingError naming the step and term on a non-finite loss.
TrainResult train_loop(const TrainConfig& config, const Manifest& manifest,
                       const std::filesystem::path& out_dir, const TrainLoopOptions& options = {});

/// Predictions of `model` scored at `resolution`. Above the ground-truth
/// size the enhanced image is used; at or below it the crop is scored
/// directly unless the model has an enhancer.
Predictor model_predictor(const DCEModel<float>& model, const Manifest& manifest, int resolution);

}  // namespace dce
