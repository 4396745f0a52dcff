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

#include "screamkd/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "screamkd/error.hpp"
#include "screamkd/fileio.hpp"

namespace screamkd::eval {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string task_title(data::Task t) {
  return t == data::Task::Detect ? "Scream Detection" : "Scream Type Classification";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? " | " : "") << pad(cells[c], width[c]);
    out << '\n';
  };
  line(header);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
  out << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

std::optional<double> reference_accuracy(const std::string& model, data::Task task, bool noisy) {
  const auto& ref = reference_tables();
  const char* table = noisy ? "accuracy_noisy" : "accuracy_clean";
  const std::string key(data::task_name(task));
  if (!ref.contains(table) || !ref[table].contains(model) || !ref[table][model].contains(key)) return std::nullopt;
  return ref[table][model][key].get<double>();
}

}  // namespace

Metrics metrics_from(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(Errc::ShapeMismatch, "metrics over " + std::to_string(labels.size()) + " labels and " +
                                         std::to_string(predictions.size()) + " predictions");
  }
  Metrics m;
  m.n = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 1 || predictions[i] < 0 || predictions[i] > 1) {
      throw Error(Errc::LabelOutOfRange, "binary metrics need labels in {0, 1}");
    }
    ++m.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
  }
  m.accuracy = m.n == 0 ? 0.0 : static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) / static_cast<double>(m.n);
  return m;
}

Metrics pool(std::span<const Metrics> parts) {
  Metrics m;
  for (const auto& p : parts) {
    m.n += p.n;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) m.confusion[a][b] += p.confusion[a][b];
    }
  }
  m.accuracy = m.n == 0 ? 0.0 : static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) / static_cast<double>(m.n);
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"accuracy_pct", fmt2(100.0 * m.accuracy)},
          {"n", m.n},
          {"confusion", {{m.confusion[0][0], m.confusion[0][1]}, {m.confusion[1][0], m.confusion[1][1]}}}};
}

std::vector<int> argmax_labels(const nn::Tensor& logits) {
  if (logits.ndim() != 2) throw Error(Errc::ShapeMismatch, "logits must be [N, K]");
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = logits.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

std::vector<int> predict(const model::Model& m, std::span<const dsp::MelSpec> specs, std::size_t batch) {
  std::vector<int> out;
  out.reserve(specs.size());
  batch = std::max<std::size_t>(batch, 1);
  for (std::size_t start = 0; start < specs.size(); start += batch) {
    const std::size_t count = std::min(batch, specs.size() - start);
    const auto preds = argmax_labels(model::forward(m, model::make_batch(specs.subspan(start, count),
                                                                          m.config.in_channels)));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

LabeledClips load_clips(const data::Manifest& manifest, data::Task task) {
  LabeledClips out;
  for (const auto& r : manifest.records) {
    const auto label = data::label_of(r, task);
    if (!label) {
      throw Error(Errc::UnlabeledRecord, r.path.string() + " has no label for task " + std::string(data::task_name(task)));
    }
    out.clips.push_back(audio::canonicalize(audio::read_wav(r.path)));
    out.labels.push_back(*label);
  }
  return out;
}

Metrics evaluate_specs(const model::Model& m, std::span<const dsp::MelSpec> specs, std::span<const int> labels) {
  return metrics_from(labels, predict(m, specs));
}

Metrics evaluate_clips(const model::Model& m, const LabeledClips& clips) {
  std::vector<dsp::MelSpec> specs;
  specs.reserve(clips.clips.size());
  for (const auto& c : clips.clips) specs.push_back(dsp::melspectrogram(c));
  return evaluate_specs(m, specs, clips.labels);
}

Metrics evaluate(const model::Model& m, const data::Manifest& test, data::Task task) {
  return evaluate_clips(m, load_clips(test, task));
}

double SnrPolicy::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Clean:
      return data::kCleanSnr;
    case Kind::Fixed:
      return fixed_db;
    case Kind::Choice:
      if (choices.empty()) throw Error(Errc::InvalidParams, "SNR choice list is empty");
      return choices[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(choices.size()) - 1))];
  }
  return data::kCleanSnr;
}

SnrPolicy parse_snr_policy(const std::string& text) {
  if (text == "clean" || text == "inf") return SnrPolicy::clean();
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(Errc::UsageError, "bad SNR value '" + item + "'");
    }
  }
  if (values.empty()) throw Error(Errc::UsageError, "empty SNR policy");
  if (values.size() == 1) return SnrPolicy::fixed(values[0]);
  SnrPolicy p;
  p.choices = values;
  return p;
}

NoisyReport evaluate_noisy_clips(const model::Model& m, const LabeledClips& clips, const data::NoiseBank& bank,
                                 std::span<const std::string> categories, const SnrPolicy& policy,
                                 std::uint64_t seed) {
  for (const auto& cat : categories) bank.category(cat);
  NoisyReport report;
  std::vector<Metrics> parts;
  for (const auto& cat : categories) {
    const auto& noises = bank.category(cat);
    std::vector<dsp::MelSpec> specs;
    specs.reserve(clips.clips.size());
    for (std::size_t i = 0; i < clips.clips.size(); ++i) {
      const auto& clip = clips.clips[i];
      Rng rng(subseed(seed, "noise:" + cat, i));
      const double snr = policy.draw(rng);
      if (std::isinf(snr)) {
        specs.push_back(dsp::melspectrogram(clip));
        continue;
      }
      std::vector<std::size_t> usable;
      for (std::size_t k = 0; k < noises.size(); ++k) {
        if (noises[k].samples.size() >= clip.samples.size()) usable.push_back(k);
      }
      if (usable.empty()) throw Error(Errc::NoiseTooShort, "no '" + cat + "' noise clip is long enough");
      const auto& noise = noises[usable[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(usable.size()) - 1))]];
      specs.push_back(dsp::melspectrogram(data::mix_noise(clip, noise, snr, rng)));
    }
    const Metrics cm = evaluate_specs(m, specs, clips.labels);
    report.per_category[cat] = cm;
    parts.push_back(cm);
  }
  report.pooled = pool(parts);
  return report;
}

NoisyReport evaluate_noisy(const model::Model& m, const data::Manifest& test, const data::NoiseBank& bank,
                           std::span<const std::string> categories, const SnrPolicy& policy, std::uint64_t seed,
                           data::Task task) {
  for (const auto& r : test.records) {
    if (r.split != data::Split::Test) {
      throw Error(Errc::SplitViolation, "noise may only be applied to test records; " + r.path.string() +
                                            " is tagged '" + std::string(data::split_name(r.split)) + "'");
    }
  }
  for (const auto& cat : categories) bank.category(cat);
  return evaluate_noisy_clips(m, load_clips(test, task), bank, categories, policy, seed);
}

std::size_t penultimate_width(const model::ModelConfig& config) {
  return config.kind == model::ModelKind::Student ? 64 : 512;
}

Embeddings compute_embeddings(const model::Model& m, const data::Manifest& manifest) {
  const std::size_t width = penultimate_width(m.config);
  Embeddings e;
  e.values = dsp::BasicMatrix<float>(manifest.size(), width);
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < manifest.size(); start += kChunk) {
    const std::size_t end = std::min(manifest.size(), start + kChunk);
    std::vector<dsp::MelSpec> specs;
    for (std::size_t i = start; i < end; ++i) {
      specs.push_back(dsp::melspectrogram(audio::read_wav(manifest.records[i].path)));
    }
    const nn::Tensor acts = model::penultimate(m, model::make_batch(specs, m.config.in_channels));
    if (acts.numel() != (end - start) * width) throw Error(Errc::ShapeMismatch, "unexpected penultimate width");
    std::copy(acts.values().begin(), acts.values().end(), e.values.data.begin() + static_cast<std::ptrdiff_t>(start * width));
  }
  return e;
}

std::size_t export_embeddings(const model::Model& m, const data::Manifest& manifest,
                              const std::filesystem::path& out_path) {
  const Embeddings e = compute_embeddings(m, manifest);
  dsp::MelSpec container;
  container.values = e.values;
  container.normalized = false;
  container.source.sample_rate = 0;
  dsp::write_features(container, out_path);
  std::ofstream labels(out_path.string() + ".labels.csv", std::ios::trunc);
  if (!labels) throw Error(Errc::IoError, "cannot write labels next to " + out_path.string());
  labels << "row,path,is_scream,valence\n";
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& r = manifest.records[i];
    labels << i << ',' << r.path.generic_string() << ',' << (r.is_scream ? (*r.is_scream ? "1" : "0") : "") << ','
           << data::valence_name(r.valence) << '\n';
  }
  if (!labels) throw Error(Errc::IoError, "short write to labels file");
  return manifest.size();
}

Embeddings read_embeddings(const std::filesystem::path& path) {
  Embeddings e;
  e.values = dsp::read_features(path).values;
  return e;
}

Stats summarize(std::vector<double> samples) {
  Stats s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(samples.size());
  // Nearest-rank percentiles.
  auto rank = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(idx, 1, samples.size()) - 1];
  };
  s.p50 = rank(0.5);
  s.p95 = rank(0.95);
  s.min = samples.front();
  s.max = samples.back();
  return s;
}

nlohmann::json latency_to_json(const LatencyReport& r) {
  auto stats = [](const Stats& s) {
    return nlohmann::json{{"mean", s.mean}, {"p50", s.p50}, {"p95", s.p95}, {"min", s.min}, {"max", s.max}};
  };
  nlohmann::json j = {{"label", r.label},     {"trials", r.trials},   {"warmup", r.warmup},
                      {"threads", r.threads}, {"machine", r.machine}};
  j["load_ms"] = r.load_ms ? stats(*r.load_ms) : nlohmann::json(nullptr);
  j["forward_ms"] = r.forward_ms ? stats(*r.forward_ms) : nlohmann::json(nullptr);
  return j;
}

std::string machine_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
}

LatencyReport bench_forward(const model::Model& m, const nn::Shape& input_shape, int trials, int warmup) {
  if (trials < 10) throw Error(Errc::InvalidParams, "bench_forward needs at least 10 trials");
  if (warmup < 0) throw Error(Errc::InvalidParams, "warmup must be >= 0");
  nn::set_num_threads(1);
  nn::Tensor input(input_shape);
  Rng rng(subseed(0, "bench-input"));
  for (float& v : input.mutable_values()) v = static_cast<float>(2.0 * uniform01(rng) - 1.0);
  for (int i = 0; i < warmup; ++i) model::forward(m, input);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    const auto t0 = Clock::now();
    const nn::Tensor out = model::forward(m, input);
    samples.push_back(ms_since(t0));
  }
  LatencyReport r;
  r.label = std::string(model::kind_name(m.config.kind));
  r.forward_ms = summarize(std::move(samples));
  r.trials = trials;
  r.warmup = warmup;
  r.threads = 1;
  r.machine = machine_descriptor();
  return r;
}

LatencyReport bench_load(const std::filesystem::path& model_path, int trials) {
  if (trials < 10) throw Error(Errc::InvalidParams, "bench_load needs at least 10 trials");
  if (!std::filesystem::exists(model_path)) throw Error(Errc::IoError, "no model file at " + model_path.string());
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(trials));
  std::string label;
  for (int i = 0; i < trials; ++i) {
    const auto t0 = Clock::now();
    const model::Model m = model::load_model(model_path);
    samples.push_back(ms_since(t0));
    label = std::string(model::kind_name(m.config.kind));
  }
  LatencyReport r;
  r.label = label;
  r.load_ms = summarize(std::move(samples));
  r.trials = trials;
  r.threads = 1;
  r.machine = machine_descriptor();
  return r;
}

SizeReport size_report(const model::Model& m) {
  SizeReport r;
  r.trainable_params = model::count_params(m, true);
  r.buffer_elements = model::count_buffer_elements(m);
  r.total_params = r.trainable_params + r.buffer_elements;
  r.payload_bytes = 4 * r.total_params;
  r.file_bytes = model::serialize_model(m).size();
  r.mib = static_cast<double>(r.file_bytes) / 1048576.0;
  return r;
}

nlohmann::json size_to_json(const SizeReport& r) {
  return {{"total_params", r.total_params}, {"trainable_params", r.trainable_params},
          {"buffer_elements", r.buffer_elements}, {"payload_bytes", r.payload_bytes},
          {"file_bytes", r.file_bytes},           {"mib", r.mib}};
}

const nlohmann::json& reference_tables() {
  static const nlohmann::json tables = [] {
    const auto bytes = read_file(std::filesystem::path(SCREAMKD_DATA_DIR) / "reference_tables.json");
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  }();
  return tables;
}

std::string render_accuracy_table(std::span<const AccuracyRow> rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    const auto ref = reference_accuracy(r.model, r.task, r.noisy);
    cells.push_back({r.model, task_title(r.task), r.noisy ? "noisy" : "clean", fmt2(r.accuracy_pct),
                     ref ? fmt2(*ref) : "-"});
  }
  return render({"Model", "Task", "Setting", "Accuracy", "Published"}, cells);
}

std::string render_size_table(std::span<const std::pair<std::string, SizeReport>> rows) {
  const auto& ref = reference_tables()["size"];
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, s] : rows) {
    const bool known = ref.contains(name);
    cells.push_back({name, std::to_string(s.trainable_params), std::to_string(s.total_params), fmt3(s.mib),
                     known ? std::to_string(ref[name]["params"].get<long long>()) : "-",
                     known ? fmt3(ref[name]["mib"].get<double>()) : "-"});
  }
  return render({"Model", "Trainable", "Total", "Size (MiB)", "Published params", "Published MiB"}, cells);
}

std::string render_latency_table(std::span<const LatencyReport> rows) {
  std::vector<std::vector<std::string>> cells;
  auto cell = [](const std::optional<Stats>& s) { return s ? fmt3(s->mean) + " (p95 " + fmt3(s->p95) + ")" : "-"; };
  for (const auto& r : rows) cells.push_back({r.label, cell(r.load_ms), cell(r.forward_ms), std::to_string(r.trials)});
  return render({"Model", "Load ms", "Forward ms", "Trials"}, cells);
}

std::string latency_plot_csv(std::span<const LatencyReport> rows) {
  std::ostringstream out;
  out << "model,metric,mean_ms,p50_ms,p95_ms\n";
  for (const auto& r : rows) {
    if (r.load_ms) out << r.label << ",load," << r.load_ms->mean << ',' << r.load_ms->p50 << ',' << r.load_ms->p95 << '\n';
    if (r.forward_ms) {
      out << r.label << ",forward," << r.forward_ms->mean << ',' << r.forward_ms->p50 << ',' << r.forward_ms->p95 << '\n';
    }
  }
  return out.str();
}

}  // namespace screamkd::eval
