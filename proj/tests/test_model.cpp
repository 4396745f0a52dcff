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

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "screamkd/model.hpp"
#include "test_util.hpp"

using namespace screamkd;
using namespace screamkd::model;
using screamkd::testing::code_of;

namespace {

nn::Tensor random_batch(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0F, 1.0F);
  nn::Tensor t({n, 3, h, w});
  for (float& v : t.mutable_values()) v = u(rng);
  return t;
}

std::size_t numel_of(const Model& m, const std::string& prefix) {
  std::size_t n = 0;
  for (const auto& p : m.params) {
    if (p.name.rfind(prefix, 0) == 0) n += p.value.numel();
  }
  return n;
}

const Model& teacher() {
  static const Model m = build_teacher(ModelConfig::teacher(), 1);
  return m;
}

void put_crc(std::vector<std::uint8_t>& bytes) {
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size() - 4));
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
}

}  // namespace

TEST_CASE("student parameter count is exactly 712,778") {
  const Model s = build_student(ModelConfig::student());
  CHECK(count_params(s) == 712778);
  CHECK(count_params(s, false) == 712778);
  CHECK(count_buffer_elements(s) == 0);
  // 3*6*49+6, 6*16*25+16, 16*32*25+32 ; 5376*128+128, 128*64+64, 64*2+2
  CHECK(numel_of(s, "conv1") == 888);
  CHECK(numel_of(s, "conv2") == 2416);
  CHECK(numel_of(s, "conv3") == 12832);
  CHECK(numel_of(s, "fc1") == 688256);
  CHECK(numel_of(s, "fc2") == 8256);
  CHECK(numel_of(s, "fc3") == 130);
  CHECK(s.param("fc1.weight").shape() == nn::Shape{5376, 128});
}

TEST_CASE("teacher parameter and buffer counts") {
  const Model& t = teacher();
  // torchvision resnet18: 11,689,512 with a 1000-way head (512*1000+1000).
  const std::size_t expected = 11689512 - 513000 + 1026;
  CHECK(expected == 11177538);
  CHECK(count_params(t) == expected);
  std::size_t bn_channels = 0;
  for (const auto& b : t.buffers) {
    if (b.name.ends_with("running_mean")) bn_channels += b.value.numel();
  }
  CHECK(bn_channels == 4800);
  CHECK(count_buffer_elements(t) == 9600);
  CHECK(count_params(t, false) == 11187138);
  const double rel = std::abs(static_cast<double>(count_params(t)) - 11177616.0) / 11177616.0;
  CHECK(rel < 1e-4);
}

TEST_CASE("empty model has no parameters") {
  Model m;
  CHECK(count_params(m) == 0);
  CHECK(count_params(m, false) == 0);
}

TEST_CASE("config validation") {
  auto c = ModelConfig::student();
  c.dropout_p = 1.0;
  CHECK(code_of([&] { build_student(c); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { build_student(ModelConfig::teacher()); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { build_teacher(ModelConfig::student()); }) == Errc::InvalidConfig);
  auto t = ModelConfig::teacher();
  t.dropout_p = 0.2;
  CHECK(code_of([&] { build_teacher(t); }) == Errc::InvalidConfig);
  auto k = ModelConfig::student();
  k.num_classes = 1;
  CHECK(code_of([&] { build_student(k); }) == Errc::InvalidConfig);
  const auto j = config_to_json(ModelConfig::teacher());
  CHECK(config_to_json(config_from_json(j)) == j);
}

TEST_CASE("builds are deterministic in seed") {
  const Model a = build_student(ModelConfig::student(), 42);
  const Model b = build_student(ModelConfig::student(), 42);
  const Model c = build_student(ModelConfig::student(), 43);
  REQUIRE(a.params.size() == b.params.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].name == b.params[i].name);
    CHECK(nn::bit_equal(a.params[i].value, b.params[i].value));
    any_diff = any_diff || !nn::bit_equal(a.params[i].value, c.params[i].value);
  }
  CHECK(any_diff);
}

TEST_CASE("initialization scheme") {
  const Model s = build_student(ModelConfig::student(), 3);
  const auto& w = s.param("conv1.weight");
  const double bound = std::sqrt(6.0 / (3 * 49));
  double mx = 0.0;
  for (float v : w.values()) mx = std::max(mx, std::abs(static_cast<double>(v)));
  CHECK(mx <= bound);
  CHECK(mx > 0.9 * bound);
  for (float v : s.param("fc1.bias").values()) CHECK(v == 0.0F);
  for (float v : teacher().param("bn1.weight").values()) CHECK(v == 1.0F);
  for (float v : teacher().buffer("bn1.running_var").values()) CHECK(v == 1.0F);
}

TEST_CASE("forward shapes, determinism and size limits") {
  const Model s = build_student(ModelConfig::student(), 4);
  const auto x = random_batch(2, 128, 188, 5);
  const auto y = forward(s, x);
  CHECK(y.shape() == nn::Shape{2, 2});
  CHECK(nn::bit_equal(forward(s, x), y));
  CHECK(forward(s, random_batch(2, 128, 150, 6)).shape() == nn::Shape{2, 2});
  const auto z = forward(s, nn::Tensor({1, 3, 128, 188}, 0.0F));
  for (float v : z.values()) CHECK(std::isfinite(v));
  CHECK(code_of([&] { forward(s, nn::Tensor({1, 3, 30, 30}, 0.0F)); }) == Errc::InputTooSmall);
  CHECK(code_of([&] { forward(s, nn::Tensor({1, 1, 128, 188}, 0.0F)); }) == Errc::ShapeMismatch);
  CHECK(min_input_extent(ModelKind::Student) == 38);

  const auto ty = forward(teacher(), random_batch(1, 128, 188, 7));
  CHECK(ty.shape() == nn::Shape{1, 2});
}

TEST_CASE("student intermediate extents for T = 188") {
  using nn::conv_output_extent;
  std::size_t h = 128, w = 188;
  const std::size_t expect[][2] = {{122, 182}, {61, 91}, {57, 87}, {28, 43}, {24, 39}, {12, 19}};
  const std::size_t kernels[3] = {7, 5, 5};
  for (int i = 0; i < 3; ++i) {
    h = conv_output_extent(h, kernels[i], 1, 0);
    w = conv_output_extent(w, kernels[i], 1, 0);
    CHECK(h == expect[2 * i][0]);
    CHECK(w == expect[2 * i][1]);
    h = conv_output_extent(h, 2, 2, 0);
    w = conv_output_extent(w, 2, 2, 0);
    CHECK(h == expect[2 * i + 1][0]);
    CHECK(w == expect[2 * i + 1][1]);
  }
}

TEST_CASE("train-mode dropout depends on the rng, eval does not") {
  const Model s = build_student(ModelConfig::student(), 8);
  const auto x = random_batch(2, 64, 64, 9);
  auto train_logits = [&](std::uint64_t seed) {
    nn::Graph<float> g(false);
    Binding<float> b(g, s, false);
    nn::Rng rng(seed);
    return forward_graph<float>(s.config, b, g.input(x), nn::Mode::Train, &rng).logits.value();
  };
  CHECK(nn::bit_equal(train_logits(1), train_logits(1)));
  CHECK(!nn::bit_equal(train_logits(1), train_logits(2)));
  auto eval_logits = [&](std::uint64_t seed) {
    nn::Graph<float> g(false);
    Binding<float> b(g, s, false);
    nn::Rng rng(seed);
    return forward_graph<float>(s.config, b, g.input(x), nn::Mode::Eval, &rng).logits.value();
  };
  CHECK(nn::bit_equal(eval_logits(1), eval_logits(2)));
  CHECK(nn::bit_equal(eval_logits(1), forward(s, x)));

  nn::Graph<float> g(false);
  Binding<float> b(g, s, false);
  CHECK(code_of([&] { forward_graph<float>(s.config, b, g.input(x), nn::Mode::Train, nullptr); }) ==
        Errc::InvalidConfig);
}

TEST_CASE("penultimate widths") {
  const Model s = build_student(ModelConfig::student(), 10);
  const auto x = random_batch(3, 128, 188, 11);
  const auto p = penultimate(s, x);
  CHECK(p.shape() == nn::Shape{3, 64});
  CHECK(nn::bit_equal(p, penultimate(s, x)));
  CHECK(penultimate(teacher(), random_batch(1, 128, 188, 12)).shape() == nn::Shape{1, 512});
}

TEST_CASE("make_batch replicates the spectrogram across channels") {
  dsp::MelSpec a;
  a.values = dsp::BasicMatrix<float>(4, 5);
  for (std::size_t i = 0; i < 20; ++i) a.values.data[i] = static_cast<float>(i);
  const auto batch = make_batch(std::vector<dsp::MelSpec>{a, a});
  CHECK(batch.shape() == nn::Shape{2, 3, 4, 5});
  for (std::size_t c = 0; c < 3; ++c) CHECK(batch[20 + c * 20 + 7] == 7.0F);
  dsp::MelSpec b;
  b.values = dsp::BasicMatrix<float>(4, 6);
  CHECK(code_of([&] { make_batch(std::vector<dsp::MelSpec>{a, b}); }) == Errc::ShapeMismatch);
}

TEST_CASE("SKDM round trip and corruption") {
  const testing::TempDir dir("model");
  Model s = build_student(ModelConfig::student(), 13);
  s.metadata["note"] = "roundtrip";
  s.frozen = true;
  save_model(s, dir / "s.skdm");
  const Model back = load_model(dir / "s.skdm");
  CHECK(back.frozen);
  CHECK(back.metadata["note"] == "roundtrip");
  CHECK(config_to_json(back.config) == config_to_json(s.config));
  REQUIRE(back.params.size() == s.params.size());
  for (std::size_t i = 0; i < s.params.size(); ++i) CHECK(nn::bit_equal(back.params[i].value, s.params[i].value));
  const auto x = random_batch(1, 128, 188, 14);
  CHECK(nn::bit_equal(forward(back, x), forward(s, x)));

  auto bytes = serialize_model(s);
  CHECK(std::memcmp(bytes.data(), "SKDM", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);
  std::uint32_t meta_len = 0;
  std::memcpy(&meta_len, bytes.data() + 8, 4);
  // tensor table: names, role, ndim, dims per tensor
  std::size_t table = 4;
  for (const auto& p : s.params) table += 2 + p.name.size() + 2 + 4 * p.value.ndim();
  CHECK(bytes.size() == 12 + meta_len + table + 4 * 712778 + 4);

  auto truncated = bytes;
  truncated.resize(truncated.size() / 2);
  CHECK(code_of([&] { deserialize_model(truncated); }) == Errc::ChecksumMismatch);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK(code_of([&] { deserialize_model(flipped); }) == Errc::ChecksumMismatch);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(code_of([&] { deserialize_model(magic); }) == Errc::BadMagic);
  auto version = bytes;
  version[4] = 9;
  put_crc(version);
  CHECK(code_of([&] { deserialize_model(version); }) == Errc::VersionMismatch);
  CHECK(code_of([&] { load_model(dir / "missing.skdm"); }) == Errc::IoError);
}

TEST_CASE("teacher round trip keeps buffers") {
  Model t = teacher();
  t.buffers[0].value.mutable_data()[0] = 0.125F;
  const Model back = deserialize_model(serialize_model(t));
  REQUIRE(back.buffers.size() == t.buffers.size());
  for (std::size_t i = 0; i < t.buffers.size(); ++i) CHECK(nn::bit_equal(back.buffers[i].value, t.buffers[i].value));
  CHECK(back.config.kind == ModelKind::Teacher);
}
