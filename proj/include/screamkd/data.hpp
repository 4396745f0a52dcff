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

#ifndef SCREAMKD_DATA_HPP_
#define SCREAMKD_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "screamkd/audio_io.hpp"
#include "screamkd/random.hpp"

namespace screamkd::data {

enum class Corpus { Asvp, Vivae, Synthetic };
enum class Valence { Positive, Negative, Unknown };
enum class Split { Unassigned, Train, Test };

// Detection: 1 = scream. Type: 1 = negative valence (the alerting class).
enum class Task { Detect, Type };

std::string_view corpus_name(Corpus c);
std::string_view valence_name(Valence v);
std::string_view split_name(Split s);
std::string_view task_name(Task t);
Task parse_task(std::string_view name);

struct SampleRecord {
  std::filesystem::path path;
  Corpus corpus = Corpus::Synthetic;
  std::optional<bool> is_scream;
  Valence valence = Valence::Unknown;
  std::string speaker;
  Split split = Split::Unassigned;
};

// Class index of a record for a task, or nullopt when unlabeled for it.
std::optional<int> label_of(const SampleRecord& record, Task task);

struct Manifest {
  std::vector<SampleRecord> records;

  std::size_t size() const { return records.size(); }
  // Records tagged with `split`.
  Manifest select(Split split) const;
  // Records carrying a label for `task`.
  Manifest labeled(Task task) const;
};

struct LoadOptions {
  bool strict = false;  // require every referenced file to exist
};

// CSV header `path,dataset,is_scream,valence,speaker[,split]`. Relative
// paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& options = {});
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {},
                        const LoadOptions& options = {});
std::string format_manifest(const Manifest& manifest, const std::filesystem::path& base_dir = {});
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct VivaeName {
  std::string speaker;
  std::string emotion;
  Valence valence = Valence::Unknown;
};

// speaker_emotion_intensity_index.wav
VivaeName parse_vivae_name(std::string_view filename);

// Emotion code (third hyphen field of an ASVP-ESD name) -> label text; a
// code counts as scream when its entry is marked so.
struct AsvpCode {
  std::string emotion;
  bool scream = false;
};
using AsvpCodeTable = std::map<int, AsvpCode>;

AsvpCodeTable load_asvp_codes(const std::filesystem::path& path);
const AsvpCodeTable& default_asvp_codes();

struct AsvpName {
  int emotion_code = 0;
  std::string emotion;
  bool is_scream = false;
  std::string speaker;
};

AsvpName parse_asvp_name(std::string_view filename, const AsvpCodeTable& codes = default_asvp_codes());

// Keeps every minority record and an equal number of majority records
// drawn without replacement; records unlabeled for the task are dropped.
Manifest balance_binary(const Manifest& manifest, Task task, Rng& rng);

struct SplitOptions {
  double train_fraction = 0.8;
  bool stratify = true;  // by class label for `task`
  Task task = Task::Detect;
};

// floor(n * fraction) train records; result records carry split tags.
std::pair<Manifest, Manifest> split(const Manifest& manifest, std::uint64_t seed, const SplitOptions& options = {});

inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

struct MixResult {
  audio::AudioClip mixed;      // clamped to [-1, 1]
  std::vector<double> signal;  // pre-clamp components
  std::vector<double> noise;   // scaled noise chunk
  double gain = 0.0;
  std::size_t offset = 0;
};

MixResult mix_noise_detailed(const audio::AudioClip& clip, const audio::AudioClip& noise, double snr_db, Rng& rng);
audio::AudioClip mix_noise(const audio::AudioClip& clip, const audio::AudioClip& noise, double snr_db, Rng& rng);

double mean_power(std::span<const double> x);

inline const std::vector<std::string>& default_noise_categories() {
  static const std::vector<std::string> c{"bus", "metro", "cafe", "kitchen", "office"};
  return c;
}

struct NoiseBank {
  std::map<std::string, std::vector<audio::AudioClip>> clips;

  const std::vector<audio::AudioClip>& category(const std::string& name) const;
};

// `<root>/<category>/*.wav`, resampled to 16 kHz.
NoiseBank build_noise_bank(const std::filesystem::path& root, std::span<const std::string> categories);

struct SynthOptions {
  double scream_fraction = 0.5;
  int silent_every = 8;  // every k-th non-scream clip is digital silence; 0 disables
};

// Writes WAVs plus manifest.csv under out_dir and returns the manifest.
// Half of the scream clips are rising chirps (negative), half falling
// (positive).
Manifest synth_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir,
                       const SynthOptions& options = {});

enum class SynthKind { NonScream, ScreamNegative, ScreamPositive, Silence };
audio::AudioClip synth_clip(SynthKind kind, std::uint64_t seed, double seconds = 3.0);

// Two 3 s clips of one kind back to back (6 s).
audio::AudioClip synth_stream(SynthKind kind, std::uint64_t seed);

}  // namespace screamkd::data

#endif  // SCREAMKD_DATA_HPP_
