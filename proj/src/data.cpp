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

#include "screamkd/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "screamkd/error.hpp"
#include "screamkd/fileio.hpp"

namespace screamkd::data {
namespace {

// RFC 4180 style: quoted fields may hold commas, quotes ("") and newlines.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  std::size_t row_no = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty()) {
        throw Error(Errc::ParseError, "row " + std::to_string(row_no) + ": stray quote inside a field");
      }
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
      ++row_no;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw Error(Errc::ParseError, "row " + std::to_string(row_no) + ": unterminated quote");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void parse_fail(std::size_t row, std::size_t col, const std::string& msg) {
  throw Error(Errc::ParseError, "row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + msg);
}

std::string stem_of(std::string_view filename) {
  const std::filesystem::path p{std::string(filename)};
  return p.stem().string();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace

std::string_view corpus_name(Corpus c) {
  switch (c) {
    case Corpus::Asvp:
      return "asvp";
    case Corpus::Vivae:
      return "vivae";
    case Corpus::Synthetic:
      return "synthetic";
  }
  return "?";
}

std::string_view valence_name(Valence v) {
  switch (v) {
    case Valence::Positive:
      return "pos";
    case Valence::Negative:
      return "neg";
    case Valence::Unknown:
      return "";
  }
  return "";
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Test:
      return "test";
    case Split::Unassigned:
      return "";
  }
  return "";
}

std::string_view task_name(Task t) { return t == Task::Detect ? "detect" : "type"; }

Task parse_task(std::string_view name) {
  if (name == "detect") return Task::Detect;
  if (name == "type") return Task::Type;
  throw Error(Errc::UsageError, "task must be detect or type, got " + std::string(name));
}

std::optional<int> label_of(const SampleRecord& record, Task task) {
  if (task == Task::Detect) {
    if (!record.is_scream) return std::nullopt;
    return *record.is_scream ? 1 : 0;
  }
  switch (record.valence) {
    case Valence::Negative:
      return 1;
    case Valence::Positive:
      return 0;
    case Valence::Unknown:
      return std::nullopt;
  }
  return std::nullopt;
}

Manifest Manifest::select(Split s) const {
  Manifest out;
  for (const auto& r : records) {
    if (r.split == s) out.records.push_back(r);
  }
  return out;
}

Manifest Manifest::labeled(Task task) const {
  Manifest out;
  for (const auto& r : records) {
    if (label_of(r, task)) out.records.push_back(r);
  }
  return out;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, const LoadOptions& options) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF && static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF) {
    text.remove_prefix(3);
  }
  const auto rows = parse_csv(text);
  if (rows.empty()) throw Error(Errc::ParseError, "row 1: missing header");
  static const std::vector<std::string> kHeader{"path", "dataset", "is_scream", "valence", "speaker"};
  std::vector<std::string> header;
  for (const auto& h : rows[0]) header.push_back(lower(trim(h)));
  const bool has_split = header.size() == 6 && header[5] == "split";
  if (!(header.size() == 5 || has_split) || !std::equal(kHeader.begin(), kHeader.end(), header.begin())) {
    throw Error(Errc::ParseError, "row 1: header must be path,dataset,is_scream,valence,speaker[,split]");
  }

  Manifest m;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t row_no = r + 1;
    if (row.size() != header.size()) {
      parse_fail(row_no, std::min(row.size(), header.size()) + 1,
                 "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
    }
    SampleRecord rec;
    const std::string path = trim(row[0]);
    if (path.empty()) parse_fail(row_no, 1, "empty path");
    std::filesystem::path p(path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    rec.path = p.lexically_normal();
    if (!seen.insert(rec.path.string()).second) parse_fail(row_no, 1, "duplicate path " + path);

    const std::string ds = lower(trim(row[1]));
    if (ds == "asvp") {
      rec.corpus = Corpus::Asvp;
    } else if (ds == "vivae") {
      rec.corpus = Corpus::Vivae;
    } else if (ds == "synthetic") {
      rec.corpus = Corpus::Synthetic;
    } else {
      parse_fail(row_no, 2, "unknown dataset '" + ds + "'");
    }

    const std::string scream = trim(row[2]);
    if (scream == "1") {
      rec.is_scream = true;
    } else if (scream == "0") {
      rec.is_scream = false;
    } else if (!scream.empty()) {
      parse_fail(row_no, 3, "is_scream must be 0, 1 or empty");
    }

    const std::string val = lower(trim(row[3]));
    if (val == "pos") {
      rec.valence = Valence::Positive;
    } else if (val == "neg") {
      rec.valence = Valence::Negative;
    } else if (!val.empty()) {
      parse_fail(row_no, 4, "valence must be pos, neg or empty");
    }
    rec.speaker = trim(row[4]);

    if (has_split) {
      const std::string sp = lower(trim(row[5]));
      if (sp == "train") {
        rec.split = Split::Train;
      } else if (sp == "test") {
        rec.split = Split::Test;
      } else if (!sp.empty()) {
        parse_fail(row_no, 6, "split must be train, test or empty");
      }
    }

    if (rec.corpus == Corpus::Vivae && rec.valence == Valence::Unknown) {
      parse_fail(row_no, 4, "VIVAE records need a valence");
    }
    if (rec.corpus == Corpus::Asvp && !rec.is_scream) parse_fail(row_no, 3, "ASVP records need is_scream");
    if (options.strict && !std::filesystem::exists(rec.path)) {
      throw Error(Errc::MissingFile, "row " + std::to_string(row_no) + ": " + rec.path.string() + " does not exist");
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, const LoadOptions& options) {
  const auto bytes = read_file(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return parse_manifest(text, path.parent_path(), options);
}

std::string format_manifest(const Manifest& manifest, const std::filesystem::path& base_dir) {
  const bool with_split = std::any_of(manifest.records.begin(), manifest.records.end(),
                                      [](const SampleRecord& r) { return r.split != Split::Unassigned; });
  std::ostringstream out;
  out << "path,dataset,is_scream,valence,speaker" << (with_split ? ",split" : "") << '\n';
  for (const auto& r : manifest.records) {
    std::filesystem::path p = r.path;
    if (!base_dir.empty() && p.is_absolute() == std::filesystem::path(base_dir).is_absolute()) {
      const auto rel = p.lexically_relative(base_dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    out << csv_field(p.generic_string()) << ',' << corpus_name(r.corpus) << ','
        << (r.is_scream ? (*r.is_scream ? "1" : "0") : "") << ',' << valence_name(r.valence) << ','
        << csv_field(r.speaker);
    if (with_split) out << ',' << split_name(r.split);
    out << '\n';
  }
  return out.str();
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const std::string text = format_manifest(manifest, path.parent_path());
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

VivaeName parse_vivae_name(std::string_view filename) {
  const std::string stem = stem_of(filename);
  const auto parts = split_on(stem, '_');
  if (parts.size() != 4 || std::any_of(parts.begin(), parts.end(), [](const std::string& s) { return s.empty(); })) {
    throw Error(Errc::MalformedName, "expected speaker_emotion_intensity_index, got " + std::string(filename));
  }
  static const std::map<std::string, Valence> kEmotions{
      {"achievement", Valence::Positive}, {"pleasure", Valence::Positive}, {"surprise", Valence::Positive},
      {"anger", Valence::Negative},       {"fear", Valence::Negative},     {"pain", Valence::Negative}};
  const std::string emotion = lower(parts[1]);
  const auto it = kEmotions.find(emotion);
  if (it == kEmotions.end()) throw Error(Errc::UnrecognizedEmotion, "unknown VIVAE emotion '" + parts[1] + "'");
  return VivaeName{parts[0], emotion, it->second};
}

AsvpCodeTable load_asvp_codes(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto rows = parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  AsvpCodeTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) parse_fail(r + 1, 1, "expected code,emotion,scream");
    try {
      table[std::stoi(rows[r][0])] = AsvpCode{trim(rows[r][1]), trim(rows[r][2]) == "1"};
    } catch (const std::logic_error&) {
      parse_fail(r + 1, 1, "bad emotion code '" + rows[r][0] + "'");
    }
  }
  return table;
}

const AsvpCodeTable& default_asvp_codes() {
  static const AsvpCodeTable table = load_asvp_codes(std::filesystem::path(SCREAMKD_DATA_DIR) / "asvp_emotion_codes.csv");
  return table;
}

AsvpName parse_asvp_name(std::string_view filename, const AsvpCodeTable& codes) {
  const auto parts = split_on(stem_of(filename), '-');
  if (parts.size() < 7) throw Error(Errc::MalformedName, "ASVP-ESD names have at least 7 fields: " + std::string(filename));
  for (const auto& p : parts) {
    if (p.empty() || !std::all_of(p.begin(), p.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw Error(Errc::MalformedName, "non-numeric field in " + std::string(filename));
    }
  }
  AsvpName out;
  out.emotion_code = std::stoi(parts[2]);
  const auto it = codes.find(out.emotion_code);
  if (it == codes.end()) throw Error(Errc::UnrecognizedEmotion, "unknown ASVP emotion code " + parts[2]);
  out.emotion = it->second.emotion;
  out.is_scream = it->second.scream;
  out.speaker = parts[6];
  return out;
}

Manifest balance_binary(const Manifest& manifest, Task task, Rng& rng) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (const auto l = label_of(manifest.records[i], task)) by_class[*l].push_back(i);
  }
  const std::size_t m = std::min(by_class[0].size(), by_class[1].size());
  if (m == 0) throw Error(Errc::EmptyClass, "one class has no records for task " + std::string(task_name(task)));
  auto& majority = by_class[0].size() > by_class[1].size() ? by_class[0] : by_class[1];
  auto& minority = &majority == &by_class[0] ? by_class[1] : by_class[0];
  std::shuffle(majority.begin(), majority.end(), rng);
  std::vector<std::size_t> chosen = minority;
  chosen.insert(chosen.end(), majority.begin(), majority.begin() + static_cast<std::ptrdiff_t>(m));
  std::shuffle(chosen.begin(), chosen.end(), rng);
  Manifest out;
  for (std::size_t i : chosen) out.records.push_back(manifest.records[i]);
  return out;
}

std::pair<Manifest, Manifest> split(const Manifest& manifest, std::uint64_t seed, const SplitOptions& options) {
  const std::size_t n = manifest.size();
  if (n < 2) throw Error(Errc::TooFewRecords, "split needs at least 2 records, got " + std::to_string(n));
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw Error(Errc::InvalidParams, "train_fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.train_fraction + 1e-9));

  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < n; ++i) {
    const int key = options.stratify ? label_of(manifest.records[i], options.task).value_or(-1) : 0;
    strata[key].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  std::size_t g = 0;
  for (auto& [key, idx] : strata) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double exact = static_cast<double>(idx.size()) * static_cast<double>(n_train) / static_cast<double>(n);
    const auto q = static_cast<std::size_t>(std::floor(exact + 1e-9));
    quota.push_back(q);
    assigned += q;
    remainders.emplace_back(exact - static_cast<double>(q), g++);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n_train; k = (k + 1) % remainders.size()) {
    const std::size_t gi = remainders[k].second;
    const std::size_t size = std::next(strata.begin(), static_cast<std::ptrdiff_t>(gi))->second.size();
    if (quota[gi] < size) {
      ++quota[gi];
      ++assigned;
    }
  }

  std::vector<Split> tags(n, Split::Test);
  g = 0;
  for (const auto& [key, idx] : strata) {
    for (std::size_t k = 0; k < quota[g]; ++k) tags[idx[k]] = Split::Train;
    ++g;
  }
  std::pair<Manifest, Manifest> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r = manifest.records[i];
    r.split = tags[i];
    (tags[i] == Split::Train ? out.first : out.second).records.push_back(std::move(r));
  }
  return out;
}

double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

MixResult mix_noise_detailed(const audio::AudioClip& clip, const audio::AudioClip& noise, double snr_db, Rng& rng) {
  if (clip.sample_rate_hz != noise.sample_rate_hz) {
    throw Error(Errc::RateMismatch, "clip at " + std::to_string(clip.sample_rate_hz) + " Hz, noise at " +
                                        std::to_string(noise.sample_rate_hz) + " Hz");
  }
  if (noise.samples.size() < clip.samples.size()) {
    throw Error(Errc::NoiseTooShort, "noise has " + std::to_string(noise.samples.size()) + " samples, clip needs " +
                                         std::to_string(clip.samples.size()));
  }
  MixResult out;
  out.signal.assign(clip.samples.begin(), clip.samples.end());
  out.noise.assign(clip.samples.size(), 0.0);
  if (std::isinf(snr_db) && snr_db > 0) {
    out.mixed = clip;
    return out;
  }
  const std::size_t n = clip.samples.size();
  out.offset = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(noise.samples.size() - n)));
  std::vector<double> chunk(noise.samples.begin() + static_cast<std::ptrdiff_t>(out.offset),
                            noise.samples.begin() + static_cast<std::ptrdiff_t>(out.offset + n));
  const double p_signal = mean_power(out.signal);
  const double p_noise = mean_power(chunk);
  if (p_signal == 0.0) {
    out.gain = 1.0;
  } else if (p_noise > 0.0) {
    out.gain = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  }
  out.mixed.sample_rate_hz = clip.sample_rate_hz;
  out.mixed.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.noise[i] = out.gain * chunk[i];
    out.mixed.samples[i] = static_cast<float>(std::clamp(out.signal[i] + out.noise[i], -1.0, 1.0));
  }
  return out;
}

audio::AudioClip mix_noise(const audio::AudioClip& clip, const audio::AudioClip& noise, double snr_db, Rng& rng) {
  return mix_noise_detailed(clip, noise, snr_db, rng).mixed;
}

const std::vector<audio::AudioClip>& NoiseBank::category(const std::string& name) const {
  const auto it = clips.find(name);
  if (it == clips.end() || it->second.empty()) throw Error(Errc::MissingCategory, "noise bank has no '" + name + "'");
  return it->second;
}

NoiseBank build_noise_bank(const std::filesystem::path& root, std::span<const std::string> categories) {
  NoiseBank bank;
  for (const std::string& cat : categories) {
    const auto dir = root / cat;
    if (!std::filesystem::is_directory(dir)) throw Error(Errc::MissingCategory, "missing noise directory " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && lower(entry.path().extension().string()) == ".wav") files.push_back(entry.path());
    }
    if (files.empty()) throw Error(Errc::MissingCategory, "no WAV files in " + dir.string());
    std::sort(files.begin(), files.end());
    auto& out = bank.clips[cat];
    for (const auto& f : files) out.push_back(audio::resample(audio::read_wav(f), audio::kCanonicalRateHz));
  }
  return bank;
}

}  // namespace screamkd::data
