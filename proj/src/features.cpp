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

#include "screamkd/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <string>

#include "screamkd/error.hpp"
#include "screamkd/fileio.hpp"

namespace screamkd::dsp {
namespace {

constexpr double kPowerFloor = 1e-10;
constexpr std::uint8_t kMelfVersion = 1;
constexpr std::uint8_t kMelfDtypeF32 = 1;
constexpr std::size_t kMelfHeaderBytes = 16;

// FFTW's planner is not reentrant; execution with the plan's own buffers is
// confined to the owning object.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * static_cast<std::size_t>(n)));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  void execute() { fftw_execute(plan_); }
  int size() const { return n_; }

 private:
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// Reflect index into [0, n) without repeating the edge sample.
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void store_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::uint32_t load_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t frame_count(std::size_t n_samples, int hop) {
  return 1 + n_samples / static_cast<std::size_t>(hop);
}

Matrix stft_power(const audio::AudioClip& clip, const StftParams& params) {
  if (params.hop <= 0 || params.n_fft <= 0 || params.win <= 0 || params.win > params.n_fft) {
    throw Error(Errc::InvalidParams, "stft requires hop > 0 and 0 < win <= n_fft");
  }
  if (clip.samples.empty()) throw Error(Errc::InvalidParams, "stft of an empty clip");

  const int n_fft = params.n_fft;
  const std::size_t bins = static_cast<std::size_t>(n_fft / 2 + 1);
  const std::size_t frames = frame_count(clip.samples.size(), params.hop);
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t pad = n_fft / 2;

  // Periodic Hann of length win, centered inside the n_fft frame.
  std::vector<double> window(static_cast<std::size_t>(n_fft), 0.0);
  const int offset = (n_fft - params.win) / 2;
  for (int i = 0; i < params.win; ++i) {
    window[static_cast<std::size_t>(offset + i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / params.win);
  }

  Matrix power(bins, frames);
  RealFft fft(n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * params.hop - pad;
    double* in = fft.input();
    for (int i = 0; i < n_fft; ++i) {
      const std::int64_t idx = reflect_index(start + i, n);
      in[i] = window[static_cast<std::size_t>(i)] * clip.samples[static_cast<std::size_t>(idx)];
    }
    fft.execute();
    const fftw_complex* out = fft.output();
    for (std::size_t k = 0; k < bins; ++k) {
      power(k, t) = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    }
  }
  return power;
}

FilterBank mel_filterbank(const MelParams& params) {
  if (params.n_mels < 1 || params.n_fft < 2 || params.sample_rate <= 0 || params.fmin < 0.0 ||
      params.fmin >= params.fmax || params.fmax > params.sample_rate / 2.0) {
    throw Error(Errc::InvalidParams, "mel filterbank requires 0 <= fmin < fmax <= sr/2");
  }
  const std::size_t bins = static_cast<std::size_t>(params.n_fft / 2 + 1);
  const auto n_points = static_cast<std::size_t>(params.n_mels + 2);
  const double mel_lo = hz_to_mel(params.fmin);
  const double mel_hi = hz_to_mel(params.fmax);
  std::vector<double> hz(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_points - 1));
  }

  FilterBank fb{Matrix(static_cast<std::size_t>(params.n_mels), bins)};
  for (std::size_t m = 0; m < static_cast<std::size_t>(params.n_mels); ++m) {
    const double left = hz[m];
    const double center = hz[m + 1];
    const double right = hz[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * params.sample_rate / params.n_fft;
      const double rising = (f - left) / (center - left);
      const double falling = (right - f) / (right - center);
      fb.weights(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

const FilterBank& default_filterbank() {
  static const FilterBank fb = mel_filterbank(MelParams{});
  return fb;
}

template <typename T>
BasicMatrix<T> normalize_minmax(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows, m.cols);
  if (m.data.empty()) return out;
  T lo = std::numeric_limits<T>::infinity();
  T hi = -std::numeric_limits<T>::infinity();
  for (T v : m.data) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteInput, "normalize_minmax on non-finite entry");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) return out;
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    const double y = 2.0 * (static_cast<double>(m.data[i]) - lo) / range - 1.0;
    out.data[i] = static_cast<T>(std::clamp(y, -1.0, 1.0));
  }
  return out;
}

template BasicMatrix<float> normalize_minmax(const BasicMatrix<float>&);
template BasicMatrix<double> normalize_minmax(const BasicMatrix<double>&);

MelSpec melspectrogram(const audio::AudioClip& clip, const MelOptions& options) {
  const audio::AudioClip input = options.canonicalize ? audio::canonicalize(clip, options.seconds) : clip;
  if (input.sample_rate_hz != audio::kCanonicalRateHz) {
    throw Error(Errc::InvalidParams, "melspectrogram expects 16 kHz input, got " +
                                         std::to_string(input.sample_rate_hz));
  }
  const StftParams stft{};
  const Matrix power = stft_power(input, stft);
  const FilterBank& fb = default_filterbank();

  Matrix db(fb.weights.rows, power.cols);
  for (std::size_t m = 0; m < fb.weights.rows; ++m) {
    // Each triangle touches a short contiguous run of bins.
    std::size_t k0 = 0;
    while (k0 < fb.weights.cols && fb.weights(m, k0) == 0.0) ++k0;
    std::size_t k1 = k0;
    while (k1 < fb.weights.cols && fb.weights(m, k1) != 0.0) ++k1;
    for (std::size_t t = 0; t < power.cols; ++t) {
      double acc = 0.0;
      for (std::size_t k = k0; k < k1; ++k) acc += fb.weights(m, k) * power(k, t);
      db(m, t) = 10.0 * std::log10(std::max(acc, kPowerFloor));
    }
  }
  const Matrix norm = normalize_minmax(db);

  MelSpec spec;
  spec.values = BasicMatrix<float>(norm.rows, norm.cols);
  std::transform(norm.data.begin(), norm.data.end(), spec.values.data.begin(),
                 [](double v) { return static_cast<float>(v); });
  spec.normalized = true;
  spec.source = SourceParams{stft.n_fft, stft.hop, stft.win, input.sample_rate_hz, 0.0, 8000.0};
  return spec;
}

std::vector<std::uint8_t> encode_features(const MelSpec& spec) {
  std::vector<std::uint8_t> out;
  out.reserve(kMelfHeaderBytes + 8 + spec.values.data.size() * 4);
  out.insert(out.end(), {'M', 'E', 'L', 'F', kMelfVersion, kMelfDtypeF32, 0, 0});
  store_u32(out, static_cast<std::uint32_t>(spec.source.sample_rate));
  store_u32(out, spec.normalized ? 1U : 0U);
  store_u32(out, static_cast<std::uint32_t>(spec.values.rows));
  store_u32(out, static_cast<std::uint32_t>(spec.values.cols));
  for (float v : spec.values.data) store_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

MelSpec decode_features(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MELF", 4) != 0) {
    throw Error(Errc::BadMagic, "not a MELF feature file");
  }
  if (bytes.size() < kMelfHeaderBytes + 8) throw Error(Errc::IoError, "truncated MELF header");
  if (bytes[4] != kMelfVersion) {
    throw Error(Errc::VersionMismatch, "MELF version " + std::to_string(bytes[4]));
  }
  if (bytes[5] != kMelfDtypeF32) {
    throw Error(Errc::VersionMismatch, "MELF dtype " + std::to_string(bytes[5]));
  }
  MelSpec spec;
  spec.source.sample_rate = static_cast<int>(load_u32(bytes.data() + 8));
  spec.normalized = (load_u32(bytes.data() + 12) & 1U) != 0;
  const std::size_t rows = load_u32(bytes.data() + 16);
  const std::size_t cols = load_u32(bytes.data() + 20);
  const std::size_t expected = kMelfHeaderBytes + 8 + rows * cols * 4;
  if (bytes.size() != expected) {
    throw Error(Errc::IoError, "MELF payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                                   std::to_string(expected));
  }
  spec.values = BasicMatrix<float>(rows, cols);
  const std::uint8_t* p = bytes.data() + kMelfHeaderBytes + 8;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    spec.values.data[i] = std::bit_cast<float>(load_u32(p + 4 * i));
  }
  return spec;
}

void write_features(const MelSpec& spec, const std::filesystem::path& path) {
  write_file(path, encode_features(spec));
}

MelSpec read_features(const std::filesystem::path& path) { return decode_features(read_file(path)); }

}  // namespace screamkd::dsp
