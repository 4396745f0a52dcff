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

#ifndef SCREAMKD_KD_HPP_
#define SCREAMKD_KD_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "screamkd/audio_io.hpp"
#include "screamkd/augment.hpp"
#include "screamkd/model.hpp"

namespace screamkd::kd {

struct Hyperparams {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
  int batch_size = 64;
  int epochs = 100;
  double temperature = 2.0;
  double alpha = 0.5;
  std::uint64_t seed = 0;

  double val_fraction = 0.1;
  int patience = 10;              // epochs without validation improvement; 0 disables
  double target_train_acc = 0.0;  // stop once eval-mode accuracy on the training set reaches it; 0 disables
  bool augment = true;
  augment::AugmentOptions augment_options;

  // InvalidT for T <= 0, InvalidConfig for everything else.
  void validate() const;
};

nlohmann::json hyperparams_to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;  // NaN without a validation carve-out
  // Eval-mode accuracy on the training set; measured only when the
  // running train accuracy has reached target_train_acc, NaN otherwise.
  double train_eval_acc = 0.0;
  double wall_ms = 0.0;
};

nlohmann::json epoch_to_json(const EpochRecord& r);

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> train_acc;
  std::vector<double> val_acc;
  std::vector<double> train_eval_acc;
  std::vector<double> wall_ms;
  int best_epoch = -1;  // weights kept from this epoch (0-based)

  std::size_t epochs() const { return loss.size(); }
};

// Bitwise comparison of loss and accuracy series; wall time is ignored.
bool same_trajectory(const TrainHistory& a, const TrainHistory& b);

struct TrainSet {
  std::vector<audio::AudioClip> clips;  // canonical clips
  std::vector<int> labels;

  std::size_t size() const { return clips.size(); }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// alpha * T^2 * KL(softmax(t / T) || softmax(s / T)), batch mean. The
// teacher logits never receive a gradient.
template <typename T>
nn::Var<T> distillation_loss(const nn::Var<T>& teacher_logits, const nn::Var<T>& student_logits,
                             double temperature, double alpha);

// (1 - alpha) * CE(student, labels) + distillation_loss.
template <typename T>
nn::Var<T> total_loss(const nn::Var<T>& student_logits, const nn::Var<T>& teacher_logits,
                      std::span<const int> labels, double temperature, double alpha);

struct TrainResult {
  model::Model model;
  TrainHistory history;
};

// Mini-batch Adam on `model` in place. With a teacher the loss is
// total_loss, otherwise cross-entropy.
TrainHistory fit(model::Model& model, const TrainSet& data, const Hyperparams& hyper,
                 const model::Model* teacher = nullptr, const EpochCallback& on_epoch = {});

// Returns a frozen teacher.
TrainResult train_teacher(const TrainSet& data, const Hyperparams& hyper, const EpochCallback& on_epoch = {},
                          const model::ModelConfig& config = model::ModelConfig::teacher());

// Student on hard labels only.
TrainResult train_student(const TrainSet& data, const Hyperparams& hyper, const EpochCallback& on_epoch = {},
                          const model::ModelConfig& config = model::ModelConfig::student());

TrainResult distill(const model::Model& teacher, const TrainSet& data, const Hyperparams& hyper,
                    const EpochCallback& on_epoch = {},
                    const model::ModelConfig& config = model::ModelConfig::student());

// One JSON object per epoch.
class JsonlLog {
 public:
  explicit JsonlLog(const std::filesystem::path& path);
  void operator()(const EpochRecord& record);

 private:
  std::ofstream out_;
};

}  // namespace screamkd::kd

#endif  // SCREAMKD_KD_HPP_
