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

#include "screamkd/kd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numeric>

#include "screamkd/error.hpp"
#include "screamkd/optim.hpp"
#include "screamkd/random.hpp"

namespace screamkd::kd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

template <typename T>
void check_logits(const nn::Var<T>& teacher, const nn::Var<T>& student) {
  if (teacher.shape() != student.shape() || teacher.shape().size() != 2) {
    throw Error(Errc::ShapeMismatch, "distillation logits " + nn::shape_string(teacher.shape()) + " vs " +
                                         nn::shape_string(student.shape()));
  }
}

std::vector<int> argmax_rows(const nn::Tensor& logits) {
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

double accuracy_on(const model::Model& m, const std::vector<dsp::MelSpec>& specs, std::span<const int> labels) {
  if (specs.empty()) return kNaN;
  constexpr std::size_t kChunk = 16;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < specs.size(); start += kChunk) {
    const std::size_t end = std::min(specs.size(), start + kChunk);
    const auto batch = model::make_batch(std::span(specs).subspan(start, end - start), m.config.in_channels);
    const auto preds = argmax_rows(model::forward(m, batch));
    for (std::size_t i = start; i < end; ++i) correct += preds[i - start] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(specs.size());
}

}  // namespace

void Hyperparams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(Errc::InvalidT, "temperature must be > 0, got " + std::to_string(temperature));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidConfig, "alpha must lie in [0, 1]");
  if (!(lr >= 0.0)) throw Error(Errc::InvalidConfig, "lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw Error(Errc::InvalidConfig, "Adam betas must lie in [0, 1) and eps > 0");
  }
  if (batch_size < 1 || epochs < 0) throw Error(Errc::InvalidConfig, "batch_size >= 1 and epochs >= 0 required");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error(Errc::InvalidConfig, "val_fraction must lie in [0, 1)");
  if (patience < 0) throw Error(Errc::InvalidConfig, "patience must be >= 0");
}

nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  return {{"lr", h.lr},
          {"beta1", h.beta1},
          {"beta2", h.beta2},
          {"eps", h.eps},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"temperature", h.temperature},
          {"alpha", h.alpha},
          {"seed", h.seed},
          {"val_fraction", h.val_fraction},
          {"patience", h.patience},
          {"target_train_acc", h.target_train_acc},
          {"augment", h.augment},
          {"augment_options", augment::options_to_json(h.augment_options)}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.lr = j.value("lr", h.lr);
  h.beta1 = j.value("beta1", h.beta1);
  h.beta2 = j.value("beta2", h.beta2);
  h.eps = j.value("eps", h.eps);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.epochs = j.value("epochs", h.epochs);
  h.temperature = j.value("temperature", h.temperature);
  h.alpha = j.value("alpha", h.alpha);
  h.seed = j.value("seed", h.seed);
  h.val_fraction = j.value("val_fraction", h.val_fraction);
  h.patience = j.value("patience", h.patience);
  h.target_train_acc = j.value("target_train_acc", h.target_train_acc);
  h.augment = j.value("augment", h.augment);
  if (j.contains("augment_options")) h.augment_options = augment::options_from_json(j["augment_options"]);
  return h;
}

nlohmann::json epoch_to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"loss", r.loss}, {"train_acc", r.train_acc}, {"wall_ms", r.wall_ms}};
  j["val_acc"] = std::isnan(r.val_acc) ? nlohmann::json(nullptr) : nlohmann::json(r.val_acc);
  j["train_eval_acc"] = std::isnan(r.train_eval_acc) ? nlohmann::json(nullptr) : nlohmann::json(r.train_eval_acc);
  return j;
}

bool same_trajectory(const TrainHistory& a, const TrainHistory& b) {
  return bits_equal(a.loss, b.loss) && bits_equal(a.train_acc, b.train_acc) && bits_equal(a.val_acc, b.val_acc) &&
         bits_equal(a.train_eval_acc, b.train_eval_acc) && a.best_epoch == b.best_epoch;
}

template <typename T>
nn::Var<T> distillation_loss(const nn::Var<T>& teacher_logits, const nn::Var<T>& student_logits,
                             double temperature, double alpha) {
  if (!(temperature > 0.0)) throw Error(Errc::InvalidT, "temperature must be > 0");
  check_logits(teacher_logits, student_logits);
  const std::size_t n = student_logits.shape()[0];
  const std::size_t k = student_logits.shape()[1];
  if (n == 0) throw Error(Errc::ShapeMismatch, "distillation_loss on an empty batch");

  // Softened distributions, computed in double via log-sum-exp.
  auto p = std::make_shared<std::vector<double>>(n * k);
  auto q = std::make_shared<std::vector<double>>(n * k);
  const T* td = teacher_logits.value().data();
  const T* sd = student_logits.value().data();
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double tmax = -std::numeric_limits<double>::infinity();
    double smax = tmax;
    for (std::size_t j = 0; j < k; ++j) {
      tmax = std::max(tmax, td[i * k + j] / temperature);
      smax = std::max(smax, sd[i * k + j] / temperature);
    }
    double tz = 0.0, sz = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      tz += std::exp(td[i * k + j] / temperature - tmax);
      sz += std::exp(sd[i * k + j] / temperature - smax);
    }
    const double tlog = tmax + std::log(tz);
    const double slog = smax + std::log(sz);
    for (std::size_t j = 0; j < k; ++j) {
      const double log_p = td[i * k + j] / temperature - tlog;
      const double log_q = sd[i * k + j] / temperature - slog;
      (*p)[i * k + j] = std::exp(log_p);
      (*q)[i * k + j] = std::exp(log_q);
      if ((*p)[i * k + j] > 0.0) kl += (*p)[i * k + j] * (log_p - log_q);
    }
  }
  kl = std::max(0.0, kl / static_cast<double>(n));
  const double value = alpha * temperature * temperature * kl;

  nn::Graph<T>* graph = student_logits.graph();
  if (graph == nullptr) throw Error(Errc::DetachedNode, "student logits are not on a graph");
  auto backward = [p, q, n, k, temperature, alpha](const nn::BasicTensor<T>& gout,
                                                   std::span<nn::BasicTensor<T>* const> gin) {
    // d/ds of T^2 KL(p || softmax(s / T)) = T (q - p).
    const double g = static_cast<double>(gout[0]) * alpha * temperature / static_cast<double>(n);
    if (gin[1] != nullptr) {
      T* d = gin[1]->mutable_data();
      for (std::size_t i = 0; i < n * k; ++i) d[i] += static_cast<T>(g * ((*q)[i] - (*p)[i]));
    }
  };
  // The teacher side is wrapped as a constant so no gradient can reach it.
  const nn::Var<T> frozen = graph->input(teacher_logits.value());
  return graph->record(nn::BasicTensor<T>::scalar(static_cast<T>(value)), {frozen, student_logits}, backward);
}

template <typename T>
nn::Var<T> total_loss(const nn::Var<T>& student_logits, const nn::Var<T>& teacher_logits,
                      std::span<const int> labels, double temperature, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidConfig, "alpha must lie in [0, 1]");
  const nn::Var<T> ce = nn::cross_entropy(student_logits, labels);
  const nn::Var<T> ld = distillation_loss(teacher_logits, student_logits, temperature, alpha);
  return nn::add(nn::scale(ce, 1.0 - alpha), ld);
}

template nn::Var<float> distillation_loss(const nn::Var<float>&, const nn::Var<float>&, double, double);
template nn::Var<double> distillation_loss(const nn::Var<double>&, const nn::Var<double>&, double, double);
template nn::Var<float> total_loss(const nn::Var<float>&, const nn::Var<float>&, std::span<const int>, double,
                                   double);
template nn::Var<double> total_loss(const nn::Var<double>&, const nn::Var<double>&, std::span<const int>, double,
                                    double);

TrainHistory fit(model::Model& model, const TrainSet& data, const Hyperparams& hyper, const model::Model* teacher,
                 const EpochCallback& on_epoch) {
  hyper.validate();
  if (data.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");
  if (data.labels.size() != data.clips.size()) {
    throw Error(Errc::ShapeMismatch, "training set has " + std::to_string(data.clips.size()) + " clips but " +
                                         std::to_string(data.labels.size()) + " labels");
  }
  for (int label : data.labels) {
    if (label < 0 || label >= model.config.num_classes) {
      throw Error(Errc::LabelOutOfRange, "training label " + std::to_string(label));
    }
  }
  if (teacher != nullptr && !teacher->frozen) throw Error(Errc::TeacherNotFrozen, "teacher must be frozen");
  if (model.frozen) throw Error(Errc::InvalidConfig, "cannot train a frozen model");

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t n_val = 0;
  if (hyper.val_fraction > 0.0 && n >= 2) {
    Rng val_rng(subseed(hyper.seed, "val"));
    std::shuffle(order.begin(), order.end(), val_rng);
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(hyper.val_fraction * n)), 1, n - 1);
  }
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train_idx.begin(), train_idx.end());

  std::vector<dsp::MelSpec> clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = dsp::melspectrogram(data.clips[i]);
  std::vector<dsp::MelSpec> val_specs;
  std::vector<int> val_labels;
  for (std::size_t i : val_idx) {
    val_specs.push_back(clean[i]);
    val_labels.push_back(data.labels[i]);
  }
  std::vector<dsp::MelSpec> train_specs;
  std::vector<int> train_labels;
  if (hyper.target_train_acc > 0.0) {
    for (std::size_t i : train_idx) {
      train_specs.push_back(clean[i]);
      train_labels.push_back(data.labels[i]);
    }
  }

  const nn::AdamOptions adam{hyper.lr, hyper.beta1, hyper.beta2, hyper.eps};
  nn::AdamState state;
  Rng dropout_rng(subseed(hyper.seed, "dropout"));

  TrainHistory history;
  double best_val = -1.0;
  int since_best = 0;
  std::vector<model::NamedTensor> best_params;
  std::vector<model::NamedTensor> best_buffers;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> perm = train_idx;
    Rng shuffle_rng(subseed(hyper.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(hyper.batch_size));
      std::vector<dsp::MelSpec> specs;
      std::vector<int> labels;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = perm[b];
        labels.push_back(data.labels[i]);
        if (!hyper.augment) {
          specs.push_back(clean[i]);
          continue;
        }
        Rng aug_rng(subseed(hyper.seed, "augment", static_cast<std::uint64_t>(epoch) * n + i));
        const auto clip = augment::augment_waveform(data.clips[i], aug_rng, hyper.augment_options);
        specs.push_back(augment::augment_spec(dsp::melspectrogram(clip), aug_rng, hyper.augment_options));
      }
      const nn::Tensor x = model::make_batch(specs, model.config.in_channels);
      nn::Tensor teacher_logits;
      if (teacher != nullptr) teacher_logits = model::forward(*teacher, x);

      std::vector<nn::Tensor> grads;
      {
        nn::Graph<float> graph;
        model::Binding<float> binding(graph, model, true);
        const auto out = model::forward_graph(model.config, binding, graph.input(x), nn::Mode::Train, &dropout_rng);
        const nn::Var<float> loss =
            teacher != nullptr
                ? total_loss(out.logits, graph.input(teacher_logits), labels, hyper.temperature, hyper.alpha)
                : nn::cross_entropy(out.logits, labels);
        graph.backward(loss);
        for (const auto& v : binding.param_vars()) grads.push_back(graph.grad(v));
        binding.store_buffers(model);
        loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(labels.size());
        const auto preds = argmax_rows(out.logits.value());
        for (std::size_t b = 0; b < labels.size(); ++b) correct += preds[b] == labels[b] ? 1 : 0;
      }
      std::vector<nn::Tensor> params;
      params.reserve(model.params.size());
      for (auto& p : model.params) params.push_back(std::move(p.value));
      nn::adam_step(params, grads, state, adam);
      for (std::size_t p = 0; p < params.size(); ++p) model.params[p].value = std::move(params[p]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(perm.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(perm.size());
    rec.val_acc = accuracy_on(model, val_specs, val_labels);
    rec.train_eval_acc = kNaN;
    if (hyper.target_train_acc > 0.0 && rec.train_acc >= hyper.target_train_acc) {
      rec.train_eval_acc = accuracy_on(model, train_specs, train_labels);
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    history.loss.push_back(rec.loss);
    history.train_acc.push_back(rec.train_acc);
    history.val_acc.push_back(rec.val_acc);
    history.train_eval_acc.push_back(rec.train_eval_acc);
    history.wall_ms.push_back(rec.wall_ms);
    if (on_epoch) on_epoch(rec);

    bool stop = rec.train_eval_acc >= hyper.target_train_acc;
    if (n_val > 0) {
      if (rec.val_acc > best_val) {
        best_val = rec.val_acc;
        since_best = 0;
        history.best_epoch = epoch;
        best_params = model.params;
        best_buffers = model.buffers;
      } else if (hyper.patience > 0 && ++since_best >= hyper.patience) {
        stop = true;
      }
    } else {
      history.best_epoch = epoch;
    }
    if (stop) break;
  }
  if (n_val > 0 && history.best_epoch >= 0) {
    model.params = std::move(best_params);
    model.buffers = std::move(best_buffers);
  }
  return history;
}

namespace {

void record_training(model::Model& m, const Hyperparams& hyper, const TrainHistory& history, const char* recipe) {
  m.metadata["recipe"] = recipe;
  m.metadata["hyperparams"] = hyperparams_to_json(hyper);
  m.metadata["epochs_run"] = history.epochs();
  m.metadata["best_epoch"] = history.best_epoch;
}

}  // namespace

TrainResult train_teacher(const TrainSet& data, const Hyperparams& hyper, const EpochCallback& on_epoch,
                          const model::ModelConfig& config) {
  if (data.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");
  TrainResult result{model::build_model(config, subseed(hyper.seed, "init")), {}};
  result.history = fit(result.model, data, hyper, nullptr, on_epoch);
  result.model.frozen = true;
  record_training(result.model, hyper, result.history, "cross_entropy");
  return result;
}

TrainResult train_student(const TrainSet& data, const Hyperparams& hyper, const EpochCallback& on_epoch,
                          const model::ModelConfig& config) {
  if (data.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");
  TrainResult result{model::build_model(config, subseed(hyper.seed, "init")), {}};
  result.history = fit(result.model, data, hyper, nullptr, on_epoch);
  record_training(result.model, hyper, result.history, "cross_entropy");
  return result;
}

TrainResult distill(const model::Model& teacher, const TrainSet& data, const Hyperparams& hyper,
                    const EpochCallback& on_epoch, const model::ModelConfig& config) {
  if (!teacher.frozen) throw Error(Errc::TeacherNotFrozen, "distillation requires a frozen teacher");
  if (data.size() == 0) throw Error(Errc::EmptyDataset, "training set is empty");
  if (teacher.config.num_classes != config.num_classes) {
    throw Error(Errc::InvalidConfig, "teacher and student disagree on the class count");
  }
  TrainResult result{model::build_model(config, subseed(hyper.seed, "init")), {}};
  result.history = fit(result.model, data, hyper, &teacher, on_epoch);
  record_training(result.model, hyper, result.history, "distillation");
  return result;
}

JsonlLog::JsonlLog(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error(Errc::IoError, "cannot write training log " + path.string());
}

void JsonlLog::operator()(const EpochRecord& record) {
  out_ << epoch_to_json(record).dump() << '\n';
  out_.flush();
}

}  // namespace screamkd::kd
