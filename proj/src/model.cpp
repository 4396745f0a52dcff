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

#include "screamkd/model.hpp"

#include <cmath>
#include <random>
#include <type_traits>

namespace screamkd::model {
namespace {

using nn::Shape;
using nn::Tensor;

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Kaiming-uniform with ReLU gain: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
  Tensor kaiming(Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : t.mutable_values()) {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      v = static_cast<float>((2.0 * u - 1.0) * bound);
    }
    return t;
  }

 private:
  nn::Rng rng_;
};

class Builder {
 public:
  Builder(Model& model, std::uint64_t seed) : model_(model), init_(seed) {}

  void conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k, bool bias) {
    model_.params.push_back({name + ".weight", init_.kaiming(Shape{out, in, k, k}, in * k * k)});
    if (bias) model_.params.push_back({name + ".bias", Tensor(Shape{out}, 0.0F)});
  }

  void dense(const std::string& name, std::size_t in, std::size_t out) {
    model_.params.push_back({name + ".weight", init_.kaiming(Shape{in, out}, in)});
    model_.params.push_back({name + ".bias", Tensor(Shape{out}, 0.0F)});
  }

  void batchnorm(const std::string& name, std::size_t channels) {
    model_.params.push_back({name + ".weight", Tensor(Shape{channels}, 1.0F)});
    model_.params.push_back({name + ".bias", Tensor(Shape{channels}, 0.0F)});
    model_.buffers.push_back({name + ".running_mean", Tensor(Shape{channels}, 0.0F)});
    model_.buffers.push_back({name + ".running_var", Tensor(Shape{channels}, 1.0F)});
  }

 private:
  Model& model_;
  Initializer init_;
};

void validate(const ModelConfig& c, ModelKind expected) {
  if (c.kind != expected) {
    throw Error(Errc::InvalidConfig, "config kind is " + std::string(kind_name(c.kind)) + ", expected " +
                                         std::string(kind_name(expected)));
  }
  if (c.in_channels < 1 || c.num_classes < 2 || c.pool_h < 1 || c.pool_w < 1 ||
      !(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) {
    throw Error(Errc::InvalidConfig, "invalid model config " + config_to_json(c).dump());
  }
}

constexpr std::size_t kStudentFilters[3] = {6, 16, 32};
constexpr std::size_t kStudentKernels[3] = {7, 5, 5};
constexpr std::size_t kStudentHidden[2] = {128, 64};
constexpr std::size_t kStageWidths[4] = {64, 128, 256, 512};

template <typename T>
nn::Var<T> conv_bn(Binding<T>& b, const nn::Var<T>& x, const std::string& conv, const std::string& bn,
                   std::size_t stride, std::size_t padding, nn::Mode mode) {
  const nn::Var<T> y = nn::conv2d<T>(x, b.param(conv + ".weight"), std::nullopt, {stride, padding});
  return nn::batchnorm2d(y, b.param(bn + ".weight"), b.param(bn + ".bias"), b.batchnorm_stats(bn), mode);
}

template <typename T>
nn::Var<T> basic_block(Binding<T>& b, const nn::Var<T>& x, const std::string& prefix, std::size_t stride,
                       bool downsample, nn::Mode mode) {
  nn::Var<T> out = nn::relu(conv_bn(b, x, prefix + ".conv1", prefix + ".bn1", stride, 1, mode));
  out = conv_bn(b, out, prefix + ".conv2", prefix + ".bn2", 1, 1, mode);
  const nn::Var<T> identity =
      downsample ? conv_bn(b, x, prefix + ".downsample.0", prefix + ".downsample.1", stride, 0, mode) : x;
  return nn::relu(nn::add(out, identity));
}

template <typename T>
Outputs<T> teacher_forward(const ModelConfig& config, Binding<T>& b, const nn::Var<T>& x, nn::Mode mode) {
  (void)config;
  nn::Var<T> h = nn::relu(conv_bn(b, x, "conv1", "bn1", 2, 3, mode));
  h = nn::maxpool2d(h, {3, 2, 1});
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::string name = "layer" + std::to_string(stage + 1);
    const std::size_t stride = stage == 0 ? 1 : 2;
    h = basic_block(b, h, name + ".0", stride, stage != 0, mode);
    h = basic_block(b, h, name + ".1", 1, false, mode);
  }
  const nn::Var<T> pooled = nn::global_avgpool2d(h);
  return {nn::dense(pooled, b.param("fc.weight"), b.param("fc.bias")), pooled};
}

template <typename T>
Outputs<T> student_forward(const ModelConfig& config, Binding<T>& b, const nn::Var<T>& x, nn::Mode mode,
                           nn::Rng* rng) {
  nn::Rng unused(0);
  nn::Rng& r = rng ? *rng : unused;
  if (mode == nn::Mode::Train && config.dropout_p > 0.0 && rng == nullptr) {
    throw Error(Errc::InvalidConfig, "train-mode student forward requires an rng for dropout");
  }
  nn::Var<T> h = x;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "conv" + std::to_string(i + 1);
    h = nn::conv2d<T>(h, b.param(name + ".weight"), b.param(name + ".bias"), {1, 0});
    h = nn::dropout(nn::relu(h), config.dropout_p, mode, r);
    h = nn::maxpool2d(h, {2, 2, 0});
  }
  h = nn::adaptive_maxpool2d(h, static_cast<std::size_t>(config.pool_h), static_cast<std::size_t>(config.pool_w));
  h = nn::flatten(h);
  h = nn::dropout(nn::relu(nn::dense(h, b.param("fc1.weight"), b.param("fc1.bias"))), config.dropout_p, mode, r);
  h = nn::dropout(nn::relu(nn::dense(h, b.param("fc2.weight"), b.param("fc2.bias"))), config.dropout_p, mode, r);
  return {nn::dense(h, b.param("fc3.weight"), b.param("fc3.bias")), h};
}

std::size_t student_min_extent() {
  // Smallest extent that survives conv7/pool2/conv5/pool2/conv5/pool2.
  for (std::size_t e = 1;; ++e) {
    std::size_t d = e;
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      d = nn::conv_output_extent(d, kStudentKernels[i], 1, 0);
      ok = d >= 2;
      d /= 2;
    }
    if (ok && d >= 1) return e;
  }
}

template <typename T>
void check_input(const ModelConfig& config, const nn::Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(config.in_channels)) {
    throw Error(Errc::ShapeMismatch, "model input must be [N," + std::to_string(config.in_channels) +
                                         ",H,W], got " + nn::shape_string(s));
  }
  const std::size_t min_extent = min_input_extent(config.kind);
  if (s[2] < min_extent || s[3] < min_extent) {
    throw Error(Errc::InputTooSmall, "input " + nn::shape_string(s) + " below minimum extent " +
                                         std::to_string(min_extent));
  }
}

}  // namespace

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Teacher: return "teacher";
    case ModelKind::Student: return "student";
  }
  return "unknown";
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"kind", kind_name(c.kind)},   {"in_channels", c.in_channels}, {"num_classes", c.num_classes},
          {"pool_h", c.pool_h},          {"pool_w", c.pool_w},           {"dropout_p", c.dropout_p}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "teacher") {
    c.kind = ModelKind::Teacher;
  } else if (kind == "student") {
    c.kind = ModelKind::Student;
  } else {
    throw Error(Errc::InvalidConfig, "unknown model kind '" + kind + "'");
  }
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.pool_h = j.at("pool_h").get<int>();
  c.pool_w = j.at("pool_w").get<int>();
  c.dropout_p = j.at("dropout_p").get<double>();
  return c;
}

const Tensor& Model::param(std::string_view name) const {
  for (const NamedTensor& t : params) {
    if (t.name == name) return t.value;
  }
  throw Error(Errc::InvalidConfig, "no parameter named " + std::string(name));
}

Tensor& Model::param(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const Model&>(*this).param(name));
}

const Tensor& Model::buffer(std::string_view name) const {
  for (const NamedTensor& t : buffers) {
    if (t.name == name) return t.value;
  }
  throw Error(Errc::InvalidConfig, "no buffer named " + std::string(name));
}

Model build_student(const ModelConfig& config, std::uint64_t seed) {
  validate(config, ModelKind::Student);
  Model m;
  m.config = config;
  Builder b(m, seed);
  std::size_t in = static_cast<std::size_t>(config.in_channels);
  for (int i = 0; i < 3; ++i) {
    b.conv("conv" + std::to_string(i + 1), kStudentFilters[i], in, kStudentKernels[i], true);
    in = kStudentFilters[i];
  }
  const std::size_t flat = kStudentFilters[2] * static_cast<std::size_t>(config.pool_h * config.pool_w);
  b.dense("fc1", flat, kStudentHidden[0]);
  b.dense("fc2", kStudentHidden[0], kStudentHidden[1]);
  b.dense("fc3", kStudentHidden[1], static_cast<std::size_t>(config.num_classes));
  return m;
}

Model build_teacher(const ModelConfig& config, std::uint64_t seed) {
  validate(config, ModelKind::Teacher);
  if (config.dropout_p != 0.0) throw Error(Errc::InvalidConfig, "the teacher has no dropout");
  Model m;
  m.config = config;
  Builder b(m, seed);
  b.conv("conv1", 64, static_cast<std::size_t>(config.in_channels), 7, false);
  b.batchnorm("bn1", 64);
  std::size_t in = 64;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = kStageWidths[stage];
    for (int block = 0; block < 2; ++block) {
      const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
      b.conv(p + ".conv1", width, in, 3, false);
      b.batchnorm(p + ".bn1", width);
      b.conv(p + ".conv2", width, width, 3, false);
      b.batchnorm(p + ".bn2", width);
      if (block == 0 && stage != 0) {
        b.conv(p + ".downsample.0", width, in, 1, false);
        b.batchnorm(p + ".downsample.1", width);
      }
      in = width;
    }
  }
  b.dense("fc", 512, static_cast<std::size_t>(config.num_classes));
  return m;
}

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  return config.kind == ModelKind::Teacher ? build_teacher(config, seed) : build_student(config, seed);
}

std::size_t count_params(const Model& model, bool trainable_only) {
  std::size_t n = 0;
  for (const NamedTensor& t : model.params) n += t.value.numel();
  if (!trainable_only) n += count_buffer_elements(model);
  return n;
}

std::size_t count_buffer_elements(const Model& model) {
  std::size_t n = 0;
  for (const NamedTensor& t : model.buffers) n += t.value.numel();
  return n;
}

std::size_t min_input_extent(ModelKind kind) {
  static const std::size_t student = student_min_extent();
  return kind == ModelKind::Student ? student : 32;
}

template <typename T>
Binding<T>::Binding(nn::Graph<T>& graph, const Model& model, bool trainable) {
  vars_.reserve(model.params.size());
  for (const NamedTensor& t : model.params) {
    nn::BasicTensor<T> value;
    if constexpr (std::is_same_v<T, float>) {
      value = t.value;
    } else {
      value = t.value.template cast<T>();
    }
    param_index_.emplace(t.name, vars_.size());
    vars_.push_back(trainable ? graph.parameter(std::move(value)) : graph.input(std::move(value)));
  }
  for (const NamedTensor& t : model.buffers) {
    buffer_index_.emplace(t.name, buffers_.size());
    if constexpr (std::is_same_v<T, float>) {
      buffers_.push_back(t.value);
    } else {
      buffers_.push_back(t.value.template cast<T>());
    }
  }
}

template <typename T>
nn::Var<T> Binding<T>::param(std::string_view name) const {
  const auto it = param_index_.find(std::string(name));
  if (it == param_index_.end()) throw Error(Errc::InvalidConfig, "no parameter named " + std::string(name));
  return vars_[it->second];
}

template <typename T>
nn::BatchNormStats<T> Binding<T>::batchnorm_stats(const std::string& prefix) {
  const auto mean = buffer_index_.find(prefix + ".running_mean");
  const auto var = buffer_index_.find(prefix + ".running_var");
  if (mean == buffer_index_.end() || var == buffer_index_.end()) {
    throw Error(Errc::InvalidConfig, "no running statistics for " + prefix);
  }
  nn::BatchNormStats<T> stats;
  stats.running_mean = &buffers_[mean->second];
  stats.running_var = &buffers_[var->second];
  return stats;
}

template <typename T>
void Binding<T>::store_buffers(Model& model) const {
  for (NamedTensor& t : model.buffers) {
    const auto it = buffer_index_.find(t.name);
    if (it == buffer_index_.end()) continue;
    if constexpr (std::is_same_v<T, float>) {
      t.value = buffers_[it->second];
    } else {
      t.value = buffers_[it->second].template cast<float>();
    }
  }
}

template <typename T>
Outputs<T> forward_graph(const ModelConfig& config, Binding<T>& binding, const nn::Var<T>& x, nn::Mode mode,
                         nn::Rng* rng) {
  check_input(config, x);
  if (config.kind == ModelKind::Teacher) return teacher_forward(config, binding, x, mode);
  return student_forward(config, binding, x, mode, rng);
}

template class Binding<float>;
template class Binding<double>;
template Outputs<float> forward_graph(const ModelConfig&, Binding<float>&, const nn::Var<float>&, nn::Mode, nn::Rng*);
template Outputs<double> forward_graph(const ModelConfig&, Binding<double>&, const nn::Var<double>&, nn::Mode,
                                       nn::Rng*);

namespace {

Outputs<float> eval_outputs(const Model& model, const Tensor& batch, nn::Graph<float>& graph) {
  Binding<float> binding(graph, model, false);
  return forward_graph(model.config, binding, graph.input(batch), nn::Mode::Eval, nullptr);
}

}  // namespace

Tensor forward(const Model& model, const Tensor& batch) {
  nn::Graph<float> graph(false);
  return eval_outputs(model, batch, graph).logits.value();
}

Tensor penultimate(const Model& model, const Tensor& batch) {
  nn::Graph<float> graph(false);
  return eval_outputs(model, batch, graph).penultimate.value();
}

Tensor make_batch(std::span<const dsp::MelSpec> specs, int channels) {
  if (specs.empty()) throw Error(Errc::ShapeMismatch, "empty batch");
  const std::size_t rows = specs.front().values.rows;
  const std::size_t cols = specs.front().values.cols;
  const auto c = static_cast<std::size_t>(channels);
  Tensor batch(Shape{specs.size(), c, rows, cols});
  float* out = batch.mutable_data();
  const std::size_t plane = rows * cols;
  for (std::size_t n = 0; n < specs.size(); ++n) {
    if (specs[n].values.rows != rows || specs[n].values.cols != cols) {
      throw Error(Errc::ShapeMismatch, "spectrogram " + std::to_string(n) + " has a different shape");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::copy(specs[n].values.data.begin(), specs[n].values.data.end(), out + (n * c + ch) * plane);
    }
  }
  return batch;
}

}  // namespace screamkd::model
