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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "screamkd/data.hpp"
#include "screamkd/eval.hpp"
#include "test_util.hpp"

using namespace screamkd;
using namespace screamkd::eval;
using screamkd::testing::code_of;

namespace {

// Student whose last layer ignores its input and favors `cls`.
model::Model constant_model(int cls) {
  auto m = model::build_student(model::ModelConfig::student(), 1);
  auto& w = m.param("fc3.weight");
  std::fill(w.mutable_values().begin(), w.mutable_values().end(), 0.0F);
  auto& b = m.param("fc3.bias");
  b.mutable_data()[0] = cls == 0 ? 1.0F : 0.0F;
  b.mutable_data()[1] = cls == 1 ? 1.0F : 0.0F;
  m.frozen = true;
  return m;
}

struct Fixture {
  testing::TempDir dir{"eval"};
  data::Manifest all;
  data::Manifest train;
  data::Manifest test;
  data::NoiseBank bank;

  Fixture() {
    all = data::synth_dataset(12, 3, dir / "syn");
    auto parts = data::split(all, 1);
    train = parts.first;
    test = parts.second;
    for (const auto& cat : data::default_noise_categories()) {
      bank.clips[cat].push_back(data::synth_clip(data::SynthKind::NonScream, cat.size(), 4.0));
    }
  }
};

}  // namespace

TEST_CASE("metrics and pooling") {
  const std::vector<int> labels = {1, 1, 0, 0, 1};
  const std::vector<int> preds = {1, 0, 0, 1, 1};
  const auto m = metrics_from(labels, preds);
  CHECK(m.n == 5);
  CHECK(m.accuracy == doctest::Approx(0.6));
  CHECK(m.confusion[1][1] == 2);
  CHECK(m.confusion[1][0] == 1);
  CHECK(m.confusion[0][1] == 1);
  CHECK(m.confusion[0][0] == 1);
  CHECK(metrics_from(labels, labels).accuracy == 1.0);
  const std::vector<Metrics> parts = {m, metrics_from(labels, labels)};
  const auto pooled = pool(parts);
  CHECK(pooled.n == 10);
  CHECK(pooled.accuracy == doctest::Approx(0.8));
  CHECK(metrics_to_json(m)["accuracy"] == doctest::Approx(0.6));
  CHECK(code_of([&] { metrics_from(labels, std::vector<int>{1}); }) == Errc::ShapeMismatch);
  CHECK(code_of([&] { metrics_from(std::vector<int>{2}, std::vector<int>{0}); }) == Errc::LabelOutOfRange);
}

TEST_CASE("argmax ties go to class 0") {
  const nn::Tensor logits({3, 2}, std::vector<float>{0.5F, 0.5F, -1.0F, 2.0F, 3.0F, -3.0F});
  CHECK(argmax_labels(logits) == std::vector<int>{0, 1, 0});
}

TEST_CASE("snr policy") {
  CHECK(parse_snr_policy("clean").kind == SnrPolicy::Kind::Clean);
  const auto fixed = parse_snr_policy("10");
  CHECK(fixed.kind == SnrPolicy::Kind::Fixed);
  CHECK(fixed.fixed_db == 10.0);
  const auto choice = parse_snr_policy("5,10,15,20");
  CHECK(choice.kind == SnrPolicy::Kind::Choice);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double v = choice.draw(rng);
    CHECK((v == 5.0 || v == 10.0 || v == 15.0 || v == 20.0));
  }
  CHECK(std::isinf(SnrPolicy::clean().draw(rng)));
  CHECK(SnrPolicy{}.choices == std::vector<double>{5.0, 10.0, 15.0, 20.0});
  CHECK(code_of([] { parse_snr_policy("loud"); }) == Errc::UsageError);
}

TEST_CASE("constant and oracle predictors") {
  std::vector<dsp::MelSpec> specs;
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) {
    specs.push_back(dsp::melspectrogram(data::synth_clip(data::SynthKind::NonScream, 10 + i)));
    labels.push_back(i % 2);
  }
  CHECK(evaluate_specs(constant_model(0), specs, labels).accuracy == 0.5);
  CHECK(evaluate_specs(constant_model(1), specs, labels).accuracy == 0.5);
  const auto ones = predict(constant_model(1), specs, 4);
  CHECK(ones == std::vector<int>(6, 1));
  const auto oracle = metrics_from(labels, labels);
  CHECK(oracle.accuracy == 1.0);
}

TEST_CASE("evaluation over manifests") {
  Fixture f;
  const auto model = model::build_student(model::ModelConfig::student(), 2);
  const auto a = evaluate(model, f.test, data::Task::Detect);
  const auto b = evaluate(model, f.test, data::Task::Detect);
  CHECK(a.n == f.test.size());
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.confusion == b.confusion);

  data::Manifest unlabeled = f.test;
  unlabeled.records[0].is_scream.reset();
  CHECK(code_of([&] { evaluate(model, unlabeled, data::Task::Detect); }) == Errc::UnlabeledRecord);
}

TEST_CASE("noise only touches test records") {
  Fixture f;
  const auto model = model::build_student(model::ModelConfig::student(), 2);
  const auto& cats = data::default_noise_categories();
  CHECK(code_of([&] {
          evaluate_noisy(model, f.train, f.bank, cats, SnrPolicy{}, 1, data::Task::Detect);
        }) == Errc::SplitViolation);
  CHECK(code_of([&] { evaluate_noisy(model, f.all, f.bank, cats, SnrPolicy{}, 1, data::Task::Detect); }) ==
        Errc::SplitViolation);
  const std::vector<std::string> street{"street"};
  CHECK(code_of([&] { evaluate_noisy(model, f.test, f.bank, street, SnrPolicy{}, 1, data::Task::Detect); }) ==
        Errc::MissingCategory);

  const auto r1 = evaluate_noisy(model, f.test, f.bank, cats, SnrPolicy{}, 9, data::Task::Detect);
  const auto r2 = evaluate_noisy(model, f.test, f.bank, cats, SnrPolicy{}, 9, data::Task::Detect);
  CHECK(r1.per_category.size() == 5);
  CHECK(r1.pooled.n == 5 * f.test.size());
  double lo = 1.0, hi = 0.0;
  for (const auto& [cat, m] : r1.per_category) {
    CHECK(m.n == f.test.size());
    CHECK(m.confusion == r2.per_category.at(cat).confusion);
    lo = std::min(lo, m.accuracy);
    hi = std::max(hi, m.accuracy);
  }
  CHECK(r1.pooled.accuracy >= lo);
  CHECK(r1.pooled.accuracy <= hi);

  const auto clean = evaluate_noisy(model, f.test, f.bank, cats, SnrPolicy::clean(), 9, data::Task::Detect);
  const auto plain = evaluate(model, f.test, data::Task::Detect);
  for (const auto& [cat, m] : clean.per_category) CHECK(m.confusion == plain.confusion);
}

TEST_CASE("embedding export") {
  Fixture f;
  const auto model = model::build_student(model::ModelConfig::student(), 5);
  CHECK(penultimate_width(model.config) == 64);
  CHECK(penultimate_width(model::ModelConfig::teacher()) == 512);
  const auto mem = compute_embeddings(model, f.test);
  CHECK(mem.values.rows == f.test.size());
  CHECK(mem.values.cols == 64);
  const auto path = f.dir / "emb.melf";
  CHECK(export_embeddings(model, f.test, path) == f.test.size());
  const auto back = read_embeddings(path);
  CHECK(back.values.rows == mem.values.rows);
  CHECK(back.values.data == mem.values.data);
  CHECK(std::filesystem::exists(path.string() + ".labels.csv"));

  CHECK(export_embeddings(model, data::Manifest{}, f.dir / "empty.melf") == 0);
  CHECK(read_embeddings(f.dir / "empty.melf").values.rows == 0);
  CHECK(code_of([&] { export_embeddings(model, f.test, f.dir / "no" / "dir" / "e.melf"); }) == Errc::IoError);
}

TEST_CASE("size reports match the published table") {
  const auto student = model::build_student(model::ModelConfig::student());
  const auto s = size_report(student);
  CHECK(s.trainable_params == 712778);
  CHECK(s.total_params == 712778);
  CHECK(s.payload_bytes == 4 * 712778);
  CHECK(s.file_bytes == model::serialize_model(student).size());
  CHECK(s.mib == doctest::Approx(static_cast<double>(s.file_bytes) / 1048576.0));
  CHECK(std::abs(s.mib - 2.719) / 2.719 < 0.02);

  const auto teacher = model::build_teacher(model::ModelConfig::teacher());
  const auto t = size_report(teacher);
  CHECK(t.trainable_params == 11177538);
  CHECK(t.buffer_elements == 9600);
  CHECK(t.payload_bytes == 4 * (11177538 + 9600));
  CHECK(std::abs(t.mib - 42.676) / 42.676 < 0.02);

  const std::vector<std::pair<std::string, SizeReport>> rows = {{"teacher", t}, {"student", s}};
  const auto table = render_size_table(rows);
  CHECK(table.find("712778") != std::string::npos);
  CHECK(table.find("42.676") != std::string::npos);
  CHECK(reference_tables()["accuracy_clean"]["student"]["detect"] == 80.58);
  const std::vector<AccuracyRow> acc = {{"student", data::Task::Detect, 81.234, false}};
  CHECK(render_accuracy_table(acc).find("81.23") != std::string::npos);
  CHECK(render_accuracy_table(acc).find("80.58") != std::string::npos);
}

TEST_CASE("summary statistics") {
  const auto s = summarize({5.0, 1.0, 3.0, 2.0, 4.0});
  CHECK(s.mean == 3.0);
  CHECK(s.p50 == 3.0);
  CHECK(s.min == 1.0);
  CHECK(s.max == 5.0);
  CHECK(s.p95 <= 5.0);
  CHECK(s.p95 >= 4.0);
}

TEST_CASE("benchmarks") {
  const testing::TempDir dir("bench");
  const auto student = model::build_student(model::ModelConfig::student());
  const auto teacher = model::build_teacher(model::ModelConfig::teacher());
  const nn::Shape shape{1, 3, 128, 188};
  const auto sf = bench_forward(student, shape, 10, 2);
  const auto tf = bench_forward(teacher, shape, 10, 2);
  CHECK(sf.trials == 10);
  CHECK(sf.warmup == 2);
  CHECK(sf.threads >= 1);
  CHECK(!sf.machine.empty());
  REQUIRE(sf.forward_ms.has_value());
  CHECK(sf.forward_ms->mean < tf.forward_ms->mean);
  CHECK(code_of([&] { bench_forward(student, shape, 5, 0); }) == Errc::InvalidParams);

  model::save_model(student, dir / "s.skdm");
  model::save_model(teacher, dir / "t.skdm");
  const auto sl = bench_load(dir / "s.skdm", 10);
  const auto tl = bench_load(dir / "t.skdm", 10);
  REQUIRE(sl.load_ms.has_value());
  CHECK(sl.load_ms->mean < tl.load_ms->mean);
  CHECK(code_of([&] { bench_load(dir / "missing.skdm", 10); }) == Errc::IoError);

  const auto j = latency_to_json(sf);
  CHECK(j.contains("machine"));
  const std::vector<LatencyReport> rows = {sf, tf};
  const auto csv = latency_plot_csv(rows);
  CHECK(csv.rfind("model,metric,mean_ms,p50_ms,p95_ms", 0) == 0);
  CHECK(!render_latency_table(rows).empty());
}
