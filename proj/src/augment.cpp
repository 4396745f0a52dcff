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

#include "screamkd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "screamkd/error.hpp"

namespace screamkd::augment {

nlohmann::json options_to_json(const AugmentOptions& o) {
  return {{"stretch_prob", o.stretch_prob},     {"stretch_min", o.stretch_min},
          {"stretch_max", o.stretch_max},       {"noise_prob", o.noise_prob},
          {"noise_sigma", o.noise_sigma},       {"time_masks_min", o.time_masks_min},
          {"time_masks_max", o.time_masks_max}, {"time_mask_max_width", o.time_mask_max_width},
          {"freq_masks_min", o.freq_masks_min}, {"freq_masks_max", o.freq_masks_max},
          {"freq_mask_max_width", o.freq_mask_max_width}};
}

AugmentOptions options_from_json(const nlohmann::json& j) {
  AugmentOptions o;
  o.stretch_prob = j.value("stretch_prob", o.stretch_prob);
  o.stretch_min = j.value("stretch_min", o.stretch_min);
  o.stretch_max = j.value("stretch_max", o.stretch_max);
  o.noise_prob = j.value("noise_prob", o.noise_prob);
  o.noise_sigma = j.value("noise_sigma", o.noise_sigma);
  o.time_masks_min = j.value("time_masks_min", o.time_masks_min);
  o.time_masks_max = j.value("time_masks_max", o.time_masks_max);
  o.time_mask_max_width = j.value("time_mask_max_width", o.time_mask_max_width);
  o.freq_masks_min = j.value("freq_masks_min", o.freq_masks_min);
  o.freq_masks_max = j.value("freq_masks_max", o.freq_masks_max);
  o.freq_mask_max_width = j.value("freq_mask_max_width", o.freq_mask_max_width);
  return o;
}

std::pair<std::int64_t, std::int64_t> rational_approx(double x, std::int64_t max_den) {
  if (!(x > 0.0) || !std::isfinite(x)) throw Error(Errc::InvalidParams, "rational_approx needs a positive value");
  // Convergents h/k of the continued fraction of x.
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double rest = x;
  for (int iter = 0; iter < 64; ++iter) {
    const double a_d = std::floor(rest);
    if (a_d > 1e12) break;
    const auto a = static_cast<std::int64_t>(a_d);
    const std::int64_t h2 = a * h1 + h0;
    const std::int64_t k2 = a * k1 + k0;
    if (k2 > max_den) break;
    h0 = h1;
    h1 = h2;
    k0 = k1;
    k1 = k2;
    const double frac = rest - a_d;
    if (frac < 1e-12) break;
    rest = 1.0 / frac;
  }
  return {h1, k1};
}

audio::AudioClip stretch(const audio::AudioClip& clip, double factor) {
  if (!(factor > 0.0)) throw Error(Errc::InvalidParams, "stretch factor must be positive");
  const auto [up, down] = rational_approx(1.0 / factor);
  audio::AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples = audio::resample_ratio(clip.samples, up, down);
  return out;
}

audio::AudioClip augment_waveform(const audio::AudioClip& clip, Rng& rng, const AugmentOptions& options) {
  audio::AudioClip out = clip;
  const double seconds = static_cast<double>(clip.samples.size()) / clip.sample_rate_hz;
  if (uniform01(rng) < options.stretch_prob) {
    const double factor = options.stretch_min + (options.stretch_max - options.stretch_min) * uniform01(rng);
    out = audio::fix_length(stretch(out, factor), seconds);
  }
  if (uniform01(rng) < options.noise_prob) {
    std::normal_distribution<double> noise(0.0, options.noise_sigma);
    for (float& s : out.samples) s = static_cast<float>(s + noise(rng));
  }
  for (float& s : out.samples) s = std::clamp(s, -1.0F, 1.0F);
  return out;
}

dsp::MelSpec apply_masks(const dsp::MelSpec& spec, std::span<const Mask> masks) {
  dsp::MelSpec out = spec;
  auto& v = out.values;
  for (const Mask& m : masks) {
    if (m.time) {
      const std::size_t end = std::min(v.cols, m.start + m.width);
      for (std::size_t r = 0; r < v.rows; ++r) {
        for (std::size_t c = m.start; c < end; ++c) v(r, c) = 0.0F;
      }
    } else {
      const std::size_t end = std::min(v.rows, m.start + m.width);
      for (std::size_t r = m.start; r < end; ++r) {
        std::fill_n(v.data.begin() + static_cast<std::ptrdiff_t>(r * v.cols), v.cols, 0.0F);
      }
    }
  }
  return out;
}

dsp::MelSpec augment_spec(const dsp::MelSpec& spec, Rng& rng, const AugmentOptions& options) {
  std::vector<Mask> masks;
  auto draw = [&](bool time, int count_min, int count_max, int max_width, std::size_t extent) {
    if (count_max <= 0 || max_width <= 0 || extent == 0) return;
    const auto count = uniform_int(rng, std::max(0, count_min), count_max);
    for (std::int64_t i = 0; i < count; ++i) {
      const auto width = static_cast<std::size_t>(
          std::min<std::int64_t>(uniform_int(rng, 1, max_width), static_cast<std::int64_t>(extent)));
      const auto start = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(extent - width)));
      masks.push_back({time, start, width});
    }
  };
  draw(true, options.time_masks_min, options.time_masks_max, options.time_mask_max_width, spec.frames());
  draw(false, options.freq_masks_min, options.freq_masks_max, options.freq_mask_max_width, spec.bands());
  return apply_masks(spec, masks);
}

}  // namespace screamkd::augment
