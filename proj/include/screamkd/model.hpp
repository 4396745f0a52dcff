/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SCREAMKD_MODEL_HPP_
#define SCREAMKD_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "screamkd/features.hpp"
#include "screamkd/ops.hpp"

namespace screamkd::model {

enum class ModelKind : std::uint8_t { Teacher = 1, Student = 2 };

std::string_view kind_name(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::Student;
  int in_channels = 3;
  int num_classes = 2;
  int pool_h = 12;  // student adaptive max-pool target
  int pool_w = 14;
  double dropout_p = 0.1;  // student only; the teacher has no dropout

  static ModelConfig student() { return ModelConfig{}; }
  static ModelConfig teacher() {
    ModelConfig c;
    c.kind = ModelKind::Teacher;
    c.dropout_p = 0.0;
    return c;
  }
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  nn::Tensor value;
};

// Parameters (trainable) and buffers (batch-norm running statistics), both
// in a fixed build order that depends only on the config.
struct Model {
  ModelConfig config;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> buffers;
  bool frozen = false;
  nlohmann::json metadata = nlohmann::json::object();

  const nn::Tensor& param(std::string_view name) const;
  nn::Tensor& param(std::string_view name);
  const nn::Tensor& buffer(std::string_view name) const;
};

Model build_student(const ModelConfig& config, std::uint64_t seed = 0);
Model build_teacher(const ModelConfig& config, std::uint64_t seed = 0);
Model build_model(const ModelConfig& config, std::uint64_t seed = 0);

std::size_t count_params(const Model& model, bool trainable_only = true);
std::size_t count_buffer_elements(const Model& model);

// Smallest spatial extent (H and W) accepted by forward().
std::size_t min_input_extent(ModelKind kind);

// Parameters of a model placed on a graph. For T = float the tensors share
// storage with the model; other scalar types get converted copies.
template <typename T>
class Binding {
 public:
  Binding(nn::Graph<T>& graph, const Model& model, bool trainable);

  nn::Var<T> param(std::string_view name) const;
  nn::BatchNormStats<T> batchnorm_stats(const std::string& prefix);
  const std::vector<nn::Var<T>>& param_vars() const { return vars_; }

  // Copies running statistics (updated by train-mode batch norm) back.
  void store_buffers(Model& model) const;

 private:
  std::unordered_map<std::string, std::size_t> param_index_;
  std::unordered_map<std::string, std::size_t> buffer_index_;
  std::vector<nn::Var<T>> vars_;
  std::vector<nn::BasicTensor<T>> buffers_;
};

template <typename T>
struct Outputs {
  nn::Var<T> logits;
  nn::Var<T> penultimate;
};

// Records the network on the binding's graph. rng is required in train
// mode when the model has dropout.
template <typename T>
Outputs<T> forward_graph(const ModelConfig& config, Binding<T>& binding, const nn::Var<T>& x, nn::Mode mode,
                         nn::Rng* rng);

// Eval-mode logits [N, num_classes] for a batch [N, C, H, W].
nn::Tensor forward(const Model& model, const nn::Tensor& batch);

// Eval-mode activations feeding the final dense layer (64 wide for the
// student, 512 for the teacher).
nn::Tensor penultimate(const Model& model, const nn::Tensor& batch);

// [N, C, bands, frames]: each spectrogram replicated across C channels.
nn::Tensor make_batch(std::span<const dsp::MelSpec> specs, int channels = 3);

// SKDM container: magic, version, kind, JSON metadata, named tensors, CRC32.
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace screamkd::model

#endif  // SCREAMKD_MODEL_HPP_
