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

#include "screamkd/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

#include "screamkd/error.hpp"
#include "screamkd/fileio.hpp"

namespace screamkd::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::uint16_t block_align = 0;
};

// Kaiser-windowed sinc, half-width kHalfTaps input samples.
constexpr int kTapsPerPhase = 64;
constexpr int kHalfTaps = kTapsPerPhase / 2;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.96;
constexpr std::int64_t kMaxTabulatedPhases = 8192;

double kaiser(double t) {
  const double r = t / kHalfTaps;
  if (r <= -1.0 || r >= 1.0) return 0.0;
  static const double denom = std::cyl_bessel_i(0.0, kKaiserBeta);
  return std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / denom;
}

// Taps for output positions whose fractional input offset is `frac`
// (0 <= frac < 1). Tap j multiplies input[i0 - kHalfTaps + 1 + j].
void compute_taps(double frac, double cutoff, double* taps) {
  double sum = 0.0;
  for (int j = 0; j < kTapsPerPhase; ++j) {
    const double t = static_cast<double>(j - kHalfTaps + 1) - frac;
    const double x = 2.0 * cutoff * t;
    const double sinc = (std::abs(x) < 1e-12) ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
    taps[j] = 2.0 * cutoff * sinc * kaiser(t);
    sum += taps[j];
  }
  if (sum != 0.0) {
    for (int j = 0; j < kTapsPerPhase; ++j) taps[j] /= sum;
  }
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::MalformedContainer, "missing RIFF/WAVE magic");
  }
  const std::uint32_t riff_size = load_u32(bytes.data() + 4);
  if (static_cast<std::uint64_t>(riff_size) + 8 > bytes.size()) {
    throw Error(Errc::MalformedContainer, "RIFF size exceeds buffer");
  }
  const std::size_t end = static_cast<std::size_t>(riff_size) + 8;

  FormatChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= end) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = load_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (static_cast<std::uint64_t>(body) + chunk_size > end) {
      throw Error(Errc::MalformedContainer, "chunk size exceeds container");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw Error(Errc::MalformedContainer, "fmt chunk too short");
      const std::uint8_t* f = bytes.data() + body;
      fmt.format = load_u16(f);
      fmt.channels = load_u16(f + 2);
      fmt.sample_rate = load_u32(f + 4);
      fmt.block_align = load_u16(f + 12);
      fmt.bits = load_u16(f + 14);
      if (fmt.format == kFormatExtensible) {
        if (chunk_size < 40) throw Error(Errc::MalformedContainer, "extensible fmt chunk too short");
        fmt.format = load_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1U);
  }
  if (!have_fmt || !have_data) throw Error(Errc::MalformedContainer, "missing fmt or data chunk");
  if (fmt.channels < 1 || fmt.channels > 2) {
    throw Error(Errc::UnsupportedEncoding, "channel count " + std::to_string(fmt.channels));
  }
  const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
  const bool float32 = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !float32) {
    throw Error(Errc::UnsupportedEncoding,
                "format " + std::to_string(fmt.format) + " with " + std::to_string(fmt.bits) + " bits");
  }
  if (fmt.sample_rate == 0) throw Error(Errc::MalformedContainer, "zero sample rate");
  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (fmt.block_align != frame_bytes) throw Error(Errc::MalformedContainer, "block align mismatch");

  const std::size_t frames = data.size() / frame_bytes;
  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      const std::uint8_t* p = data.data() + i * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        acc += static_cast<std::int16_t>(load_u16(p)) / 32768.0;
      } else {
        const float v = std::bit_cast<float>(load_u32(p));
        if (!std::isfinite(v)) throw Error(Errc::MalformedContainer, "non-finite float sample");
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    clip.samples[i] = static_cast<float>(acc / fmt.channels);
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_u32(out, 16);
  store_u16(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  store_u16(out, 1);
  store_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  store_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * (bits / 8));
  store_u16(out, bits / 8);
  store_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_u32(out, data_bytes);
  for (float s : clip.samples) {
    const float v = std::clamp(s, -1.0F, 1.0F);
    if (encoding == WavEncoding::Pcm16) {
      const long q = std::lround(static_cast<double>(v) * 32768.0);
      store_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
    } else {
      store_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  write_file(path, encode_wav(clip, encoding));
}

std::vector<float> resample_ratio(std::span<const float> input, std::int64_t up, std::int64_t down) {
  if (up <= 0 || down <= 0) throw Error(Errc::InvalidRate, "resample ratio must be positive");
  const std::int64_t g = std::gcd(up, down);
  up /= g;
  down /= g;
  const auto n = static_cast<std::int64_t>(input.size());
  const std::int64_t out_len = (n * up + down / 2) / down;
  std::vector<float> out(static_cast<std::size_t>(out_len));
  if (up == 1 && down == 1) {
    std::copy(input.begin(), input.end(), out.begin());
    return out;
  }
  const double cutoff = 0.5 * std::min(1.0, static_cast<double>(up) / static_cast<double>(down)) * kRolloff;

  std::vector<double> table;
  const bool tabulate = up <= kMaxTabulatedPhases;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up) * kTapsPerPhase);
    for (std::int64_t p = 0; p < up; ++p) {
      compute_taps(static_cast<double>(p) / static_cast<double>(up), cutoff,
                   table.data() + p * kTapsPerPhase);
    }
  }
  std::vector<double> scratch(kTapsPerPhase);
  for (std::int64_t k = 0; k < out_len; ++k) {
    const std::int64_t num = k * down;
    const std::int64_t i0 = num / up;
    const std::int64_t phase = num % up;
    const double* taps;
    if (tabulate) {
      taps = table.data() + phase * kTapsPerPhase;
    } else {
      compute_taps(static_cast<double>(phase) / static_cast<double>(up), cutoff, scratch.data());
      taps = scratch.data();
    }
    double acc = 0.0;
    const std::int64_t first = i0 - kHalfTaps + 1;
    for (int j = 0; j < kTapsPerPhase; ++j) {
      const std::int64_t idx = first + j;
      if (idx >= 0 && idx < n) acc += taps[j] * input[static_cast<std::size_t>(idx)];
    }
    out[static_cast<std::size_t>(k)] = static_cast<float>(acc);
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_hz) {
  if (target_hz <= 0) throw Error(Errc::InvalidRate, "target rate must be positive");
  if (clip.sample_rate_hz <= 0) throw Error(Errc::InvalidRate, "source rate must be positive");
  if (clip.sample_rate_hz == target_hz) return clip;
  AudioClip out;
  out.sample_rate_hz = target_hz;
  out.samples = resample_ratio(clip.samples, target_hz, clip.sample_rate_hz);
  return out;
}

AudioClip fix_length(const AudioClip& clip, double seconds) {
  const auto target = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate_hz));
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.assign(target, 0.0F);
  std::copy_n(clip.samples.begin(), std::min(target, clip.samples.size()), out.samples.begin());
  return out;
}

AudioClip canonicalize(const AudioClip& clip, double seconds) {
  return fix_length(resample(clip, kCanonicalRateHz), seconds);
}

}  // namespace screamkd::audio
