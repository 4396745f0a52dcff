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

#include "doctest.h"
#include "screamkd/augment.hpp"
#include "screamkd/data.hpp"
#include "test_util.hpp"

using namespace screamkd;
using namespace screamkd::augment;
using screamkd::testing::code_of;

namespace {

audio::AudioClip tone(std::size_t n) {
  audio::AudioClip c;
  c.sample_rate_hz = 16000;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = 0.5F * static_cast<float>(std::sin(2.0 * M_PI * 440.0 * i / 16000.0));
  return c;
}

dsp::MelSpec ramp_spec() {
  dsp::MelSpec s;
  s.values = dsp::BasicMatrix<float>(128, 188);
  for (std::size_t i = 0; i < s.values.data.size(); ++i) s.values.data[i] = 0.5F + static_cast<float>(i % 7) * 0.01F;
  s.normalized = true;
  return s;
}

}  // namespace

TEST_CASE("rational approximation") {
  CHECK(rational_approx(1.0 / 1.2) == std::pair<std::int64_t, std::int64_t>{5, 6});
  CHECK(rational_approx(0.5) == std::pair<std::int64_t, std::int64_t>{1, 2});
  const auto [p, q] = rational_approx(M_PI, 1000);
  CHECK(p == 355);
  CHECK(q == 113);
  CHECK(code_of([] { rational_approx(0.0); }) == Errc::InvalidParams);
}

TEST_CASE("stretch length arithmetic") {
  const auto clip = tone(48000);
  const auto fast = stretch(clip, 1.2);
  CHECK(fast.samples.size() == 40000);
  const auto fixed = audio::fix_length(fast, 3.0);
  CHECK(fixed.samples.size() == 48000);
  for (std::size_t i = 40000; i < 48000; ++i) REQUIRE(fixed.samples[i] == 0.0F);
  CHECK(stretch(clip, 0.8).samples.size() == 60000);
  CHECK(code_of([&] { stretch(clip, 0.0); }) == Errc::InvalidParams);
}

TEST_CASE("waveform augmentation branches") {
  const auto clip = tone(48000);
  AugmentOptions none;
  none.stretch_prob = 0.0;
  none.noise_prob = 0.0;
  Rng rng(1);
  const auto same = augment_waveform(clip, rng, none);
  CHECK(same.samples == clip.samples);

  AugmentOptions noise_only = none;
  noise_only.noise_prob = 1.0;
  const auto noisy = augment_waveform(clip, rng, noise_only);
  REQUIRE(noisy.samples.size() == clip.samples.size());
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double d = static_cast<double>(noisy.samples[i]) - clip.samples[i];
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(clip.samples.size());
  const double std_dev = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(std_dev == doctest::Approx(0.005).epsilon(0.2));

  AugmentOptions both;
  both.stretch_prob = 1.0;
  both.noise_prob = 1.0;
  auto loud = clip;
  for (float& s : loud.samples) s *= 2.0F;
  for (int i = 0; i < 5; ++i) {
    const auto out = augment_waveform(loud, rng, both);
    CHECK(out.samples.size() == 48000);
    for (float s : out.samples) REQUIRE((s >= -1.0F && s <= 1.0F));
  }

  Rng a(9), b(9);
  CHECK(augment_waveform(clip, a).samples == augment_waveform(clip, b).samples);
}

TEST_CASE("spectrogram masks") {
  const auto spec = ramp_spec();
  CHECK(apply_masks(spec, {}).values.data == spec.values.data);
  const Mask time_mask{true, 50, 20};
  const auto masked = apply_masks(spec, std::span<const Mask>(&time_mask, 1));
  for (std::size_t r = 0; r < 128; ++r) {
    for (std::size_t c = 0; c < 188; ++c) {
      const bool inside = c >= 50 && c < 70;
      REQUIRE(masked.values(r, c) == (inside ? 0.0F : spec.values(r, c)));
    }
  }
  const auto twice = apply_masks(masked, std::span<const Mask>(&time_mask, 1));
  CHECK(twice.values.data == masked.values.data);

  const Mask band{false, 120, 16};
  const auto clipped = apply_masks(spec, std::span<const Mask>(&band, 1));
  for (std::size_t c = 0; c < 188; ++c) {
    CHECK(clipped.values(119, c) == spec.values(119, c));
    CHECK(clipped.values(127, c) == 0.0F);
  }

  AugmentOptions zero;
  zero.time_masks_max = 0;
  zero.freq_masks_max = 0;
  Rng rng(3);
  CHECK(augment_spec(spec, rng, zero).values.data == spec.values.data);
}

TEST_CASE("random masks stay within configured counts and widths") {
  const auto spec = ramp_spec();
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto out = augment_spec(spec, rng);
    std::size_t zero_cols = 0, zero_rows = 0;
    for (std::size_t c = 0; c < 188; ++c) {
      bool all = true;
      for (std::size_t r = 0; r < 128 && all; ++r) all = out.values(r, c) == 0.0F;
      zero_cols += all ? 1 : 0;
    }
    for (std::size_t r = 0; r < 128; ++r) {
      bool all = true;
      for (std::size_t c = 0; c < 188 && all; ++c) all = out.values(r, c) == 0.0F;
      zero_rows += all ? 1 : 0;
    }
    REQUIRE(zero_cols >= 1);
    REQUIRE(zero_cols <= 40);
    REQUIRE(zero_rows >= 1);
    REQUIRE(zero_rows <= 32);
  }
}

TEST_CASE("options round trip through json") {
  AugmentOptions o;
  o.noise_sigma = 0.01;
  o.time_masks_max = 3;
  const auto j = options_to_json(o);
  CHECK(options_to_json(options_from_json(j)) == j);
}
