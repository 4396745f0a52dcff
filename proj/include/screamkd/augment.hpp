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

#ifndef SCREAMKD_AUGMENT_HPP_
#define SCREAMKD_AUGMENT_HPP_

#include <cstdint>
#include <span>
#include <utility>

#include "json.hpp"
#include "screamkd/audio_io.hpp"
#include "screamkd/features.hpp"
#include "screamkd/random.hpp"

namespace screamkd::augment {

struct AugmentOptions {
  double stretch_prob = 0.5;
  double stretch_min = 0.8;
  double stretch_max = 1.2;
  double noise_prob = 0.5;
  double noise_sigma = 0.005;
  int time_masks_min = 1;
  int time_masks_max = 2;
  int time_mask_max_width = 20;
  int freq_masks_min = 1;
  int freq_masks_max = 2;
  int freq_mask_max_width = 16;
};

nlohmann::json options_to_json(const AugmentOptions& options);
AugmentOptions options_from_json(const nlohmann::json& j);

// Closest p/q to x with q <= max_den (continued fractions).
std::pair<std::int64_t, std::int64_t> rational_approx(double x, std::int64_t max_den = 1000);

// Plays the clip `factor` times faster: output length round(n / factor).
audio::AudioClip stretch(const audio::AudioClip& clip, double factor);

audio::AudioClip augment_waveform(const audio::AudioClip& clip, Rng& rng, const AugmentOptions& options = {});

struct Mask {
  bool time = true;  // false: frequency (band) mask
  std::size_t start = 0;
  std::size_t width = 0;
};

// Zeroes the masked columns (time) or rows (bands); clipped to the extent.
dsp::MelSpec apply_masks(const dsp::MelSpec& spec, std::span<const Mask> masks);

dsp::MelSpec augment_spec(const dsp::MelSpec& spec, Rng& rng, const AugmentOptions& options = {});

}  // namespace screamkd::augment

#endif  // SCREAMKD_AUGMENT_HPP_
