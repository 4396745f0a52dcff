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

#ifndef SCREAMKD_AUDIO_IO_HPP_
#define SCREAMKD_AUDIO_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace screamkd::audio {

inline constexpr int kCanonicalRateHz = 16000;
inline constexpr double kCanonicalSeconds = 3.0;

// Mono waveform. Samples are finite and within [-1, 1] once decoded.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalRateHz;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double seconds() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

enum class WavEncoding { Pcm16, Float32 };

// Parses a RIFF/WAVE container (PCM 16-bit or IEEE float 32-bit, 1-2
// channels, little-endian). Multi-channel frames are averaged to mono.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding = WavEncoding::Pcm16);
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::Pcm16);

// Band-limited rate conversion (polyphase windowed sinc, Kaiser beta 8.6,
// 64 taps per phase). Output length is round(n * target / source). A clip
// already at the target rate is returned unchanged.
AudioClip resample(const AudioClip& clip, int target_hz = kCanonicalRateHz);

// Rational-ratio core used by resample() and time-stretch augmentation:
// output length is round(n * up / down).
std::vector<float> resample_ratio(std::span<const float> input, std::int64_t up, std::int64_t down);

// Keeps the leading round(seconds * rate) samples, zero-padding at the end
// when the clip is shorter.
AudioClip fix_length(const AudioClip& clip, double seconds = kCanonicalSeconds);

// resample() to 16 kHz followed by fix_length().
AudioClip canonicalize(const AudioClip& clip, double seconds = kCanonicalSeconds);

}  // namespace screamkd::audio

#endif  // SCREAMKD_AUDIO_IO_HPP_
