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
#include <cstdio>

#include "screamkd/data.hpp"
#include "screamkd/error.hpp"

namespace screamkd::data {
namespace {

constexpr int kRate = audio::kCanonicalRateHz;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Linear sweep f0 -> f1 with two harmonics and a bump in loudness.
std::vector<float> chirp(Rng& rng, double f0, double f1, std::size_t n) {
  const double duration = static_cast<double>(n) / kRate;
  const double peak_at = uniform(rng, 0.35, 0.65) * duration;
  const double peak_width = uniform(rng, 0.25, 0.45);
  const double level = uniform(rng, 0.35, 0.6);
  const double phase0 = uniform(rng, 0.0, 2.0 * M_PI);
  std::normal_distribution<double> hiss(0.0, 0.004);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    const double phase = phase0 + 2.0 * M_PI * (f0 * t + 0.5 * (f1 - f0) * t * t / duration);
    const double tone = std::sin(phase) + 0.5 * std::sin(2.0 * phase) + 0.25 * std::sin(3.0 * phase);
    const double d = (t - peak_at) / peak_width;
    const double env = 0.35 + 0.65 * std::exp(-0.5 * d * d);
    const double edge = std::min({1.0, t / 0.02, (duration - t) / 0.02});
    out[i] = static_cast<float>(std::clamp(level * env * edge * tone / 1.75 + hiss(rng), -1.0, 1.0));
  }
  return out;
}

// One-pole low-passed noise plus a slowly modulated low tone.
std::vector<float> rumble(Rng& rng, std::size_t n) {
  const double cutoff = uniform(rng, 80.0, 250.0);
  const double a = std::exp(-2.0 * M_PI * cutoff / kRate);
  const double tone_hz = uniform(rng, 60.0, 180.0);
  const double am_hz = uniform(rng, 0.2, 1.0);
  const double tone_level = uniform(rng, 0.05, 0.15);
  const double noise_level = uniform(rng, 0.15, 0.3);
  const double phase0 = uniform(rng, 0.0, 2.0 * M_PI);
  std::normal_distribution<double> white(0.0, 1.0);
  std::vector<double> lp(n);
  double state = 0.0;
  double power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    state = a * state + (1.0 - a) * white(rng);
    lp[i] = state;
    power += state * state;
  }
  const double norm = power > 0.0 ? 1.0 / std::sqrt(power / static_cast<double>(n)) : 0.0;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kRate;
    const double tone = tone_level * (0.6 + 0.4 * std::sin(2.0 * M_PI * am_hz * t)) *
                        std::sin(phase0 + 2.0 * M_PI * tone_hz * t);
    out[i] = static_cast<float>(std::clamp(noise_level * norm * lp[i] / 3.0 + tone, -1.0, 1.0));
  }
  return out;
}

const char* kind_tag(SynthKind kind) {
  switch (kind) {
    case SynthKind::NonScream:
      return "nonscream";
    case SynthKind::ScreamNegative:
      return "scream_neg";
    case SynthKind::ScreamPositive:
      return "scream_pos";
    case SynthKind::Silence:
      return "silence";
  }
  return "?";
}

}  // namespace

audio::AudioClip synth_clip(SynthKind kind, std::uint64_t seed, double seconds) {
  Rng rng(subseed(seed, "synth-clip"));
  const auto n = static_cast<std::size_t>(std::llround(seconds * kRate));
  audio::AudioClip clip;
  clip.sample_rate_hz = kRate;
  switch (kind) {
    case SynthKind::NonScream:
      clip.samples = rumble(rng, n);
      break;
    case SynthKind::ScreamNegative:
      clip.samples = chirp(rng, uniform(rng, 380.0, 420.0), uniform(rng, 1350.0, 1450.0), n);
      break;
    case SynthKind::ScreamPositive:
      clip.samples = chirp(rng, uniform(rng, 1350.0, 1450.0), uniform(rng, 380.0, 420.0), n);
      break;
    case SynthKind::Silence:
      clip.samples.assign(n, 0.0F);
      break;
  }
  return clip;
}

audio::AudioClip synth_stream(SynthKind kind, std::uint64_t seed) {
  audio::AudioClip a = synth_clip(kind, subseed(seed, "stream", 0));
  const audio::AudioClip b = synth_clip(kind, subseed(seed, "stream", 1));
  a.samples.insert(a.samples.end(), b.samples.begin(), b.samples.end());
  return a;
}

Manifest synth_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir,
                       const SynthOptions& options) {
  if (n < 2) throw Error(Errc::TooFewRecords, "synth_dataset needs n >= 2");
  const auto n_scream = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.scream_fraction)), 1, n - 1);
  std::vector<SynthKind> kinds;
  std::size_t non_count = 0;
  for (std::size_t i = 0; i < n - n_scream; ++i) {
    ++non_count;
    const bool silent = options.silent_every > 0 && non_count % static_cast<std::size_t>(options.silent_every) == 0;
    kinds.push_back(silent ? SynthKind::Silence : SynthKind::NonScream);
  }
  for (std::size_t i = 0; i < n_scream; ++i) {
    kinds.push_back(i % 2 == 0 ? SynthKind::ScreamNegative : SynthKind::ScreamPositive);
  }
  Rng order(subseed(seed, "synth-order"));
  std::shuffle(kinds.begin(), kinds.end(), order);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "clips", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + (out_dir / "clips").string() + ": " + ec.message());

  Manifest m;
  for (std::size_t i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "synth_%05zu_%s.wav", i, kind_tag(kinds[i]));
    const auto path = out_dir / "clips" / name;
    audio::write_wav(path, synth_clip(kinds[i], subseed(seed, "synth", i)));
    SampleRecord r;
    r.path = path;
    r.corpus = Corpus::Synthetic;
    r.speaker = "synth";
    r.is_scream = kinds[i] == SynthKind::ScreamNegative || kinds[i] == SynthKind::ScreamPositive;
    if (kinds[i] == SynthKind::ScreamNegative) r.valence = Valence::Negative;
    if (kinds[i] == SynthKind::ScreamPositive) r.valence = Valence::Positive;
    m.records.push_back(std::move(r));
  }
  save_manifest(m, out_dir / "manifest.csv");

  std::filesystem::create_directories(out_dir / "streams", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + (out_dir / "streams").string());
  audio::write_wav(out_dir / "streams" / "stream_scream.wav", synth_stream(SynthKind::ScreamNegative, subseed(seed, "s1")));
  audio::write_wav(out_dir / "streams" / "stream_scream_positive.wav",
                   synth_stream(SynthKind::ScreamPositive, subseed(seed, "s2")));
  audio::write_wav(out_dir / "streams" / "stream_nonscream.wav", synth_stream(SynthKind::NonScream, subseed(seed, "s3")));
  audio::write_wav(out_dir / "streams" / "stream_silence.wav", synth_stream(SynthKind::Silence, seed));
  return m;
}

}  // namespace screamkd::data
