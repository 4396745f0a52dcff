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

#ifndef SCREAMKD_FEATURES_HPP_
#define SCREAMKD_FEATURES_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "screamkd/audio_io.hpp"

namespace screamkd::dsp {

// Dense row-major matrix.
template <typename T>
struct BasicMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  BasicMatrix() = default;
  BasicMatrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

using Matrix = BasicMatrix<double>;

struct StftParams {
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
};

struct MelParams {
  int n_mels = 128;
  int n_fft = 1024;
  int sample_rate = 16000;
  double fmin = 0.0;
  double fmax = 8000.0;
};

struct SourceParams {
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
  int sample_rate = 16000;
  double fmin = 0.0;
  double fmax = 8000.0;
};

// n_mels x frames, values in [-1, 1] when normalized.
struct MelSpec {
  BasicMatrix<float> values;
  bool normalized = false;
  SourceParams source;

  std::size_t bands() const { return values.rows; }
  std::size_t frames() const { return values.cols; }
};

struct FilterBank {
  Matrix weights;  // n_mels x (n_fft / 2 + 1)
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Number of centered frames: 1 + floor(n / hop).
std::size_t frame_count(std::size_t n_samples, int hop);

// |DFT|^2 of Hann-windowed, centered (reflection-padded) frames; (n_fft/2+1) x T.
Matrix stft_power(const audio::AudioClip& clip, const StftParams& params = {});

FilterBank mel_filterbank(const MelParams& params = {});

// 2 (x - min) / (max - min) - 1; a constant matrix maps to all zeros.
template <typename T>
BasicMatrix<T> normalize_minmax(const BasicMatrix<T>& m);

struct MelOptions {
  bool canonicalize = true;
  double seconds = audio::kCanonicalSeconds;
};

// Normalized log-mel spectrogram of a clip. With canonicalize the clip is
// first resampled to 16 kHz and cut/padded to `seconds`.
MelSpec melspectrogram(const audio::AudioClip& clip, const MelOptions& options = {});

// Shared immutable filterbank for the default parameters.
const FilterBank& default_filterbank();

// MELF container: 16-byte header (magic, version, dtype, reserved,
// sample rate, flags), then rows, cols and row-major float32 values.
void write_features(const MelSpec& spec, const std::filesystem::path& path);
MelSpec read_features(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_features(const MelSpec& spec);
MelSpec decode_features(std::span<const std::uint8_t> bytes);

}  // namespace screamkd::dsp

#endif  // SCREAMKD_FEATURES_HPP_
