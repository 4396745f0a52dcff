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

#include <cmath>
#include <random>

#include "doctest.h"
#include "screamkd/data.hpp"
#include "screamkd/kd.hpp"
#include "screamkd/ops.hpp"
#include "test_util.hpp"

using namespace screamkd;
using screamkd::testing::code_of;

namespace {

nn::BasicTensor<double> logits(std::vector<double> v) {
  const std::size_t n = v.size() / 2;
  return nn::BasicTensor<double>({n, 2}, std::move(v));
}

double ld(const nn::BasicTensor<double>& t, const nn::BasicTensor<double>& s, double temp, double alpha) {
  nn::Graph<double> g;
  return kd::distillation_loss(g.input(t), g.parameter(s), temp, alpha).value()[0];
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Reference KL(p || q) for two-class rows via the logistic form.
double kl_reference(const std::vector<double>& t, const std::vector<double>& s, double temp) {
  double acc = 0.0;
  const std::size_t n = t.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = (t[2 * i + 1] - t[2 * i]) / temp;
    const double ds = (s[2 * i + 1] - s[2 * i]) / temp;
    const double lp0 = -softplus(dt), lp1 = -softplus(-dt);
    const double lq0 = -softplus(ds), lq1 = -softplus(-ds);
    acc += std::exp(lp0) * (lp0 - lq0) + std::exp(lp1) * (lp1 - lq1);
  }
  return acc / static_cast<double>(n);
}

kd::TrainSet toy_set(std::size_t n, std::uint64_t seed) {
  kd::TrainSet set;
  for (std::size_t i = 0; i < n; ++i) {
    const bool scream = i % 2 == 0;
    set.clips.push_back(data::synth_clip(scream ? data::SynthKind::ScreamNegative : data::SynthKind::NonScream,
                                         subseed(seed, "clip", i)));
    set.labels.push_back(scream ? 1 : 0);
  }
  return set;
}

kd::Hyperparams quick(int epochs) {
  kd::Hyperparams h;
  h.lr = 1e-3;
  h.batch_size = 4;
  h.epochs = epochs;
  h.val_fraction = 0.0;
  h.seed = 17;
  return h;
}

bool same_params(const model::Model& a, const model::Model& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (!nn::bit_equal(a.params[i].value, b.params[i].value)) return false;
  }
  for (std::size_t i = 0; i < a.buffers.size(); ++i) {
    if (!nn::bit_equal(a.buffers[i].value, b.buffers[i].value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("hyperparameter defaults") {
  const kd::Hyperparams h;
  CHECK(h.lr == 1e-5);
  CHECK(h.beta1 == 0.9);
  CHECK(h.beta2 == 0.9999);
  CHECK(h.eps == 1e-8);
  CHECK(h.batch_size == 64);
  CHECK(h.temperature == 2.0);
  CHECK(h.alpha == 0.5);
  CHECK_NOTHROW(h.validate());
  const auto j = kd::hyperparams_to_json(h);
  CHECK(kd::hyperparams_to_json(kd::hyperparams_from_json(j)) == j);
}

TEST_CASE("hyperparameter validation") {
  auto with = [](auto&& edit) {
    kd::Hyperparams h;
    edit(h);
    return code_of([&] { h.validate(); });
  };
  CHECK(with([](auto& h) { h.temperature = 0.0; }) == Errc::InvalidT);
  CHECK(with([](auto& h) { h.temperature = -1.0; }) == Errc::InvalidT);
  CHECK(with([](auto& h) { h.alpha = 1.5; }) == Errc::InvalidConfig);
  CHECK(with([](auto& h) { h.alpha = -0.1; }) == Errc::InvalidConfig);
  CHECK(with([](auto& h) { h.batch_size = 0; }) == Errc::InvalidConfig);
  CHECK(with([](auto& h) { h.beta2 = 1.0; }) == Errc::InvalidConfig);
  CHECK(with([](auto& h) { h.val_fraction = 1.0; }) == Errc::InvalidConfig);
}

TEST_CASE("distillation loss worked examples") {
  const auto t = logits({std::log(2.0), std::log(1.0)});
  const auto s = logits({0.0, 0.0});
  const double expected = (2.0 / 3.0) * std::log(4.0 / 3.0) + (1.0 / 3.0) * std::log(2.0 / 3.0);
  CHECK(expected == doctest::Approx(0.0566).epsilon(1e-3));
  CHECK(ld(t, s, 1.0, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  // Scaling teacher logits by T keeps the softened teacher at [2/3, 1/3].
  const auto t3 = logits({3.0 * std::log(2.0), 0.0});
  CHECK(ld(t3, s, 3.0, 1.0) == doctest::Approx(9.0 * expected).epsilon(1e-12));
  CHECK(ld(t, t, 1.0, 1.0) == 0.0);
  CHECK(ld(t, t, 4.0, 0.3) == 0.0);
  CHECK(ld(t, s, 2.0, 0.0) == 0.0);
  CHECK(code_of([&] { ld(t, s, 0.0, 1.0); }) == Errc::InvalidT);
  CHECK(code_of([&] { ld(t, logits({0, 0, 0, 0}), 1.0, 1.0); }) == Errc::ShapeMismatch);
}

TEST_CASE("distillation loss is non-negative, matches a reference and is shift invariant") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::uniform_real_distribution<double> ut(0.5, 5.0), ua(0.0, 1.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> tv(8), sv(8);
    for (auto& v : tv) v = nd(rng);
    for (auto& v : sv) v = nd(rng);
    const double temp = ut(rng);
    const double alpha = ua(rng);
    const double value = ld(logits(tv), logits(sv), temp, alpha);
    REQUIRE(value >= 0.0);
    REQUIRE(value == doctest::Approx(alpha * temp * temp * kl_reference(tv, sv, temp)).epsilon(1e-9).scale(1e-12));
    if (trial % 10 == 0) {
      auto ts = tv, ss = sv;
      for (std::size_t r = 0; r < 4; ++r) {
        const double c = shift(rng);
        ts[2 * r] += c;
        ts[2 * r + 1] += c;
        ss[2 * r] += c;
        ss[2 * r + 1] += c;
      }
      REQUIRE(ld(logits(ts), logits(ss), temp, alpha) == doctest::Approx(value).epsilon(1e-7).scale(1e-10));
    }
  }
}

TEST_CASE("distillation gradient matches finite differences and never reaches the teacher") {
  const std::vector<double> tv = {0.3, -1.2, 2.0, 0.5, -0.7, -0.1};
  const std::vector<double> sv = {1.1, 0.4, -0.3, 0.9, 0.2, -1.5};
  const std::vector<int> labels = {0, 1, 1};
  for (double alpha : {0.0, 0.4, 1.0}) {
    nn::Graph<double> g;
    const auto t = g.parameter(nn::BasicTensor<double>({3, 2}, tv));
    const auto s = g.parameter(nn::BasicTensor<double>({3, 2}, sv));
    const auto loss = kd::total_loss(s, t, labels, 2.5, alpha);
    g.backward(loss);
    const auto gt = g.grad(t);
    for (std::size_t i = 0; i < 6; ++i) CHECK(gt[i] == 0.0);
    const auto gs = g.grad(s);
    for (std::size_t i = 0; i < 6; ++i) {
      auto eval = [&](double delta) {
        auto sp = sv;
        sp[i] += delta;
        nn::Graph<double> h;
        return kd::total_loss(h.input(nn::BasicTensor<double>({3, 2}, sp)),
                              h.input(nn::BasicTensor<double>({3, 2}, tv)), labels, 2.5, alpha)
            .value()[0];
      };
      const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
      CHECK(gs[i] == doctest::Approx(fd).epsilon(1e-6).scale(1e-8));
    }
  }
}

TEST_CASE("total loss reductions") {
  const std::vector<int> labels = {1, 0};
  const auto t = logits({-3.0, 4.0, 2.0, -1.0});
  const auto s = logits({0.5, 0.2, -0.4, 1.3});
  nn::Graph<double> g;
  const double ce = nn::cross_entropy(g.input(s), labels).value()[0];
  CHECK(kd::total_loss(g.input(s), g.input(t), labels, 2.0, 0.0).value()[0] == doctest::Approx(ce).epsilon(1e-14));
  CHECK(kd::total_loss(g.input(s), g.input(t), labels, 2.0, 1.0).value()[0] ==
        doctest::Approx(ld(t, s, 2.0, 1.0)).epsilon(1e-14));
  const auto perfect = logits({-40.0, 40.0, 40.0, -40.0});
  CHECK(kd::total_loss(g.input(perfect), g.input(perfect), labels, 2.0, 0.5).value()[0] < 1e-12);
  CHECK(code_of([&] { kd::total_loss(g.input(s), g.input(t), labels, 2.0, 2.0); }) == Errc::InvalidConfig);
}

TEST_CASE("training preconditions") {
  kd::TrainSet empty;
  CHECK(code_of([&] { kd::train_teacher(empty, quick(1)); }) == Errc::EmptyDataset);
  CHECK(code_of([&] { kd::train_student(empty, quick(1)); }) == Errc::EmptyDataset);
  auto teacher = model::build_teacher(model::ModelConfig::teacher(), 1);
  auto set = toy_set(2, 1);
  CHECK(code_of([&] { kd::distill(teacher, set, quick(1)); }) == Errc::TeacherNotFrozen);
  teacher.frozen = true;
  CHECK(code_of([&] { kd::distill(teacher, empty, quick(1)); }) == Errc::EmptyDataset);
  set.labels[0] = 3;
  CHECK(code_of([&] { kd::train_student(set, quick(1)); }) == Errc::LabelOutOfRange);
}

TEST_CASE("teacher training returns a frozen model") {
  const auto r = kd::train_teacher(toy_set(2, 5), quick(1));
  CHECK(r.model.frozen);
  CHECK(r.model.config.kind == model::ModelKind::Teacher);
  CHECK(r.history.epochs() == 1);
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
  const auto set = toy_set(4, 2);
  auto h = quick(1);
  h.lr = 0.0;
  h.augment = false;
  auto student = model::build_student(model::ModelConfig::student(), subseed(h.seed, "init"));
  const auto before = student;
  const auto hist = kd::fit(student, set, h);
  CHECK(hist.epochs() == 1);
  CHECK(same_params(before, student));
}

TEST_CASE("training is deterministic and alpha = 0 distillation reduces to plain training") {
  const auto set = toy_set(6, 3);
  auto h = quick(2);
  h.alpha = 0.0;
  std::vector<kd::EpochRecord> seen;
  const auto a = kd::train_student(set, h, [&](const kd::EpochRecord& r) { seen.push_back(r); });
  const auto b = kd::train_student(set, h);
  CHECK(kd::same_trajectory(a.history, b.history));
  CHECK(same_params(a.model, b.model));
  REQUIRE(seen.size() == 2);
  CHECK(a.history.loss.size() == 2);
  CHECK(a.history.train_acc.size() == 2);
  CHECK(a.history.val_acc.size() == 2);
  CHECK(std::isnan(a.history.val_acc[0]));
  CHECK(seen[1].epoch == 1);
  CHECK(std::bit_cast<std::uint64_t>(seen[1].loss) == std::bit_cast<std::uint64_t>(a.history.loss[1]));

  auto teacher = model::build_teacher(model::ModelConfig::teacher(), 4);
  teacher.frozen = true;
  const auto teacher_before = teacher;
  const auto d = kd::distill(teacher, set, h);
  CHECK(kd::same_trajectory(a.history, d.history));
  CHECK(same_params(a.model, d.model));
  CHECK(same_params(teacher_before, teacher));

  auto h2 = h;
  h2.alpha = 0.7;
  const auto d2 = kd::distill(teacher, set, h2);
  CHECK(!kd::same_trajectory(a.history, d2.history));
  CHECK(same_params(teacher_before, teacher));
}

TEST_CASE("epoch log lines") {
  const testing::TempDir dir("kdlog");
  {
    kd::JsonlLog log(dir / "log.jsonl");
    kd::EpochRecord r;
    r.epoch = 1;
    r.loss = 0.5;
    r.train_acc = 0.75;
    r.val_acc = std::nan("");
    r.train_eval_acc = std::nan("");
    log(r);
    r.epoch = 2;
    r.val_acc = 0.5;
    log(r);
  }
  std::ifstream in(dir / "log.jsonl");
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 2);
  for (const char* key : {"epoch", "loss", "train_acc", "val_acc", "wall_ms"}) CHECK(rows[0].contains(key));
  CHECK(rows[0]["val_acc"].is_null());
  CHECK(rows[1]["val_acc"] == 0.5);
  CHECK(code_of([&] { kd::JsonlLog bad(dir / "no" / "such" / "dir.jsonl"); }) == Errc::IoError);
}
