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

#ifndef SCREAMKD_EVAL_HPP_
#define SCREAMKD_EVAL_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "screamkd/data.hpp"
#include "screamkd/model.hpp"

namespace screamkd::eval {

struct Metrics {
  double accuracy = 0.0;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [true][predicted]
  std::size_t n = 0;
};

Metrics metrics_from(std::span<const int> labels, std::span<const int> predictions);
// Sums confusion counts.
Metrics pool(std::span<const Metrics> parts);
nlohmann::json metrics_to_json(const Metrics& m);

// Argmax over logits; ties resolve to class 0.
std::vector<int> argmax_labels(const nn::Tensor& logits);
std::vector<int> predict(const model::Model& m, std::span<const dsp::MelSpec> specs, std::size_t batch = 16);

struct LabeledClips {
  std::vector<audio::AudioClip> clips;
  std::vector<int> labels;
};

// Decodes and canonicalizes every record; UnlabeledRecord when a record
// has no label for the task.
LabeledClips load_clips(const data::Manifest& manifest, data::Task task);

Metrics evaluate_specs(const model::Model& m, std::span<const dsp::MelSpec> specs, std::span<const int> labels);
Metrics evaluate_clips(const model::Model& m, const LabeledClips& clips);
Metrics evaluate(const model::Model& m, const data::Manifest& test, data::Task task);

struct SnrPolicy {
  enum class Kind { Clean, Fixed, Choice };
  Kind kind = Kind::Choice;
  double fixed_db = 10.0;
  std::vector<double> choices{5.0, 10.0, 15.0, 20.0};

  static SnrPolicy clean() { return SnrPolicy{Kind::Clean, 0.0, {}}; }
  static SnrPolicy fixed(double db) { return SnrPolicy{Kind::Fixed, db, {}}; }
  double draw(Rng& rng) const;
};

SnrPolicy parse_snr_policy(const std::string& text);  // "clean", "10", "5,10,15,20"

struct NoisyReport {
  std::map<std::string, Metrics> per_category;
  Metrics pooled;  // over every (record, category) evaluation
};

// Every record must be tagged test (SplitViolation otherwise). Noise draws
// are independent per (category, record) and keyed by seed.
NoisyReport evaluate_noisy(const model::Model& m, const data::Manifest& test, const data::NoiseBank& bank,
                           std::span<const std::string> categories, const SnrPolicy& policy, std::uint64_t seed,
                           data::Task task);
NoisyReport evaluate_noisy_clips(const model::Model& m, const LabeledClips& clips, const data::NoiseBank& bank,
                                 std::span<const std::string> categories, const SnrPolicy& policy,
                                 std::uint64_t seed);

std::size_t penultimate_width(const model::ModelConfig& config);

struct Embeddings {
  dsp::BasicMatrix<float> values;  // one row per record
};

Embeddings compute_embeddings(const model::Model& m, const data::Manifest& manifest);
// MELF container at out_path plus `<out_path>.labels.csv`. Returns rows written.
std::size_t export_embeddings(const model::Model& m, const data::Manifest& manifest,
                              const std::filesystem::path& out_path);
Embeddings read_embeddings(const std::filesystem::path& path);

struct Stats {
  double mean = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

Stats summarize(std::vector<double> samples);

struct LatencyReport {
  std::string label;
  std::optional<Stats> load_ms;
  std::optional<Stats> forward_ms;
  int trials = 0;
  int warmup = 0;
  int threads = 1;
  std::string machine;
};

nlohmann::json latency_to_json(const LatencyReport& r);
std::string machine_descriptor();

LatencyReport bench_forward(const model::Model& m, const nn::Shape& input_shape, int trials = 100, int warmup = 10);
LatencyReport bench_load(const std::filesystem::path& model_path, int trials = 20);

struct SizeReport {
  std::size_t total_params = 0;  // parameters plus buffer elements
  std::size_t trainable_params = 0;
  std::size_t buffer_elements = 0;
  std::size_t payload_bytes = 0;  // raw float32 tensor data
  std::size_t file_bytes = 0;
  double mib = 0.0;  // file_bytes / 2^20
};

SizeReport size_report(const model::Model& m);
nlohmann::json size_to_json(const SizeReport& r);

// Published reference numbers shipped in the data directory.
const nlohmann::json& reference_tables();

struct AccuracyRow {
  std::string model;
  data::Task task = data::Task::Detect;
  double accuracy_pct = 0.0;
  bool noisy = false;
};

std::string render_accuracy_table(std::span<const AccuracyRow> rows);
std::string render_size_table(std::span<const std::pair<std::string, SizeReport>> rows);
std::string render_latency_table(std::span<const LatencyReport> rows);
// model,metric,mean_ms,p50_ms,p95_ms
std::string latency_plot_csv(std::span<const LatencyReport> rows);

}  // namespace screamkd::eval

#endif  // SCREAMKD_EVAL_HPP_
