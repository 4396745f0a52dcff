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
#include <fstream>
#include <set>

#include "doctest.h"
#include "screamkd/data.hpp"
#include "screamkd/features.hpp"
#include "screamkd/fileio.hpp"
#include "test_util.hpp"

using namespace screamkd;
using namespace screamkd::data;
using screamkd::testing::code_of;

namespace {

Manifest labeled_manifest(std::size_t screams, std::size_t others) {
  Manifest m;
  for (std::size_t i = 0; i < screams + others; ++i) {
    SampleRecord r;
    r.path = "/x/clip" + std::to_string(i) + ".wav";
    r.is_scream = i < screams;
    m.records.push_back(r);
  }
  return m;
}

std::multiset<std::string> paths_of(const Manifest& m) {
  std::multiset<std::string> out;
  for (const auto& r : m.records) out.insert(r.path.string());
  return out;
}

audio::AudioClip noise_clip(std::size_t n, std::uint64_t seed, double sigma = 0.1) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  audio::AudioClip c;
  c.sample_rate_hz = 16000;
  c.samples.resize(n);
  for (float& s : c.samples) s = static_cast<float>(nd(rng));
  return c;
}

}  // namespace

TEST_CASE("manifest parsing") {
  const auto m = parse_manifest(
      "path,dataset,is_scream,valence,speaker\n"
      "a.wav,asvp,1,,s1\n"
      "b.wav,vivae,,neg,S01\n"
      "c.wav,synthetic,1,pos,\n",
      "/base");
  REQUIRE(m.size() == 3);
  CHECK(m.records[0].path == "/base/a.wav");
  CHECK(m.records[0].corpus == Corpus::Asvp);
  CHECK(m.records[0].is_scream == true);
  CHECK(m.records[1].valence == Valence::Negative);
  CHECK(!m.records[1].is_scream.has_value());
  CHECK(m.records[2].is_scream == true);
  CHECK(m.records[2].valence == Valence::Positive);
  CHECK(label_of(m.records[2], Task::Detect) == 1);
  CHECK(label_of(m.records[2], Task::Type) == 0);
  CHECK(label_of(m.records[1], Task::Type) == 1);
  CHECK(!label_of(m.records[1], Task::Detect).has_value());
  CHECK(m.labeled(Task::Detect).size() == 2);

  const auto back = parse_manifest(format_manifest(m, "/base"), "/base");
  CHECK(format_manifest(back, "/base") == format_manifest(m, "/base"));
}

TEST_CASE("manifest errors report row and column") {
  auto err = [](const std::string& text) {
    try {
      parse_manifest(text);
    } catch (const Error& e) {
      return std::pair<Errc, std::string>{e.code(), e.what()};
    }
    return std::pair<Errc, std::string>{Errc::UsageError, ""};
  };
  const std::string header = "path,dataset,is_scream,valence,speaker\n";
  auto dup = err(header + "a.wav,asvp,1,,\na.wav,asvp,0,,\n");
  CHECK(dup.first == Errc::ParseError);
  CHECK(dup.second.find("row 3") != std::string::npos);
  auto bad_flag = err(header + "a.wav,asvp,2,,\n");
  CHECK(bad_flag.first == Errc::ParseError);
  CHECK(bad_flag.second.find("column 3") != std::string::npos);
  CHECK(err(header + "a.wav,vivae,,,\n").first == Errc::ParseError);
  CHECK(err(header + "a.wav,asvp,,pos,\n").first == Errc::ParseError);
  CHECK(err(header + "a.wav,other,1,,\n").first == Errc::ParseError);
  CHECK(err(header + "a.wav,asvp,1\n").first == Errc::ParseError);
  CHECK(err("file,kind\n").first == Errc::ParseError);
  CHECK(err("").first == Errc::ParseError);
  CHECK(code_of([&] { parse_manifest(header + "missing.wav,asvp,1,,\n", "/nowhere", LoadOptions{true}); }) ==
        Errc::MissingFile);
}

TEST_CASE("VIVAE names") {
  const auto a = parse_vivae_name("S01_anger_low_01.wav");
  CHECK(a.speaker == "S01");
  CHECK(a.emotion == "anger");
  CHECK(a.valence == Valence::Negative);
  const auto s = parse_vivae_name("S11_surprise_peak_03.wav");
  CHECK(s.speaker == "S11");
  CHECK(s.valence == Valence::Positive);
  for (const char* e : {"achievement", "pleasure", "surprise"}) {
    CHECK(parse_vivae_name(std::string("S02_") + e + "_moderate_02.wav").valence == Valence::Positive);
  }
  for (const char* e : {"anger", "fear", "pain"}) {
    CHECK(parse_vivae_name(std::string("S02_") + e + "_moderate_02.wav").valence == Valence::Negative);
  }
  CHECK(code_of([] { parse_vivae_name("readme.txt"); }) == Errc::MalformedName);
  CHECK(code_of([] { parse_vivae_name("S01_joy_low_01.wav"); }) == Errc::UnrecognizedEmotion);
}

TEST_CASE("ASVP-ESD names use the shipped code table") {
  const auto& codes = default_asvp_codes();
  CHECK(codes.size() >= 12);
  const auto scream = parse_asvp_name("03-01-06-01-02-01-12.wav");
  CHECK(scream.emotion_code == 6);
  CHECK(scream.is_scream);
  CHECK(scream.speaker == "12");
  const auto calm = parse_asvp_name("03-01-02-01-01-01-07.wav");
  CHECK(!calm.is_scream);
  CHECK(code_of([] { parse_asvp_name("03-01-06.wav"); }) == Errc::MalformedName);
  CHECK(code_of([] { parse_asvp_name("03-01-99-01-02-01-12.wav"); }) == Errc::UnrecognizedEmotion);

  const testing::TempDir dir("asvp");
  {
    std::ofstream out(dir / "codes.csv");
    out << "code,emotion,scream\n1,howl,1\n";
  }
  const auto custom = load_asvp_codes(dir / "codes.csv");
  CHECK(parse_asvp_name("03-01-01-01-02-01-12.wav", custom).is_scream);
}

TEST_CASE("balancing keeps the minority and samples the majority") {
  Rng rng(1);
  const auto big = balance_binary(labeled_manifest(1170, 11455), Task::Detect, rng);
  CHECK(big.size() == 2340);
  std::size_t screams = 0;
  for (const auto& r : big.records) screams += *r.is_scream ? 1 : 0;
  CHECK(screams == 1170);
  const auto big_paths = paths_of(big);
  CHECK(std::set<std::string>(big_paths.begin(), big_paths.end()).size() == 2340);

  const auto even = labeled_manifest(10, 10);
  CHECK(paths_of(balance_binary(even, Task::Detect, rng)) == paths_of(even));
  const auto reversed = balance_binary(labeled_manifest(30, 4), Task::Detect, rng);
  CHECK(reversed.size() == 8);
  CHECK(code_of([&] { balance_binary(labeled_manifest(5, 0), Task::Detect, rng); }) == Errc::EmptyClass);

  Rng a(7), b(7);
  CHECK(format_manifest(balance_binary(labeled_manifest(40, 90), Task::Detect, a)) ==
        format_manifest(balance_binary(labeled_manifest(40, 90), Task::Detect, b)));
}

TEST_CASE("split sizes, disjointness and determinism") {
  Rng rng(2);
  const auto balanced = balance_binary(labeled_manifest(1170, 11455), Task::Detect, rng);
  const auto [train, test] = split(balanced, 11);
  CHECK(train.size() == 1872);
  CHECK(test.size() == 468);
  std::size_t train_screams = 0;
  for (const auto& r : train.records) {
    CHECK(r.split == Split::Train);
    train_screams += *r.is_scream ? 1 : 0;
  }
  CHECK(train_screams == 936);
  for (const auto& r : test.records) CHECK(r.split == Split::Test);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = labeled_manifest(3 + seed % 7, 5 + seed % 11);
    SplitOptions opt;
    opt.stratify = seed % 2 == 0;
    const auto [tr, te] = split(m, seed, opt);
    REQUIRE(tr.size() == static_cast<std::size_t>(std::floor(m.size() * 0.8)));
    auto all = paths_of(tr);
    for (const auto& p : paths_of(te)) {
      REQUIRE(all.count(p) == 0);
      all.insert(p);
    }
    REQUIRE(all == paths_of(m));
    const auto again = split(m, seed, opt);
    REQUIRE(format_manifest(again.first) == format_manifest(tr));
  }
  CHECK(code_of([] { split(labeled_manifest(1, 0), 0); }) == Errc::TooFewRecords);
  SplitOptions bad;
  bad.train_fraction = 1.0;
  CHECK(code_of([&] { split(labeled_manifest(3, 3), 0, bad); }) == Errc::InvalidParams);
}

TEST_CASE("mix_noise hits the requested SNR") {
  Rng rng(3);
  std::uniform_real_distribution<double> snr(-5.0, 30.0);
  const auto noise = noise_clip(32000, 4, 0.05);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto clip = noise_clip(4000, 100 + trial, 0.02 + 0.001 * (trial % 50));
    const double target = snr(rng);
    const auto r = mix_noise_detailed(clip, noise, target, rng);
    REQUIRE(r.mixed.samples.size() == clip.samples.size());
    const double measured = 10.0 * std::log10(mean_power(r.signal) / mean_power(r.noise));
    REQUIRE(std::abs(measured - target) < 0.1);
  }
}

TEST_CASE("mix_noise worked example and edge cases") {
  audio::AudioClip clip;
  clip.sample_rate_hz = 16000;
  clip.samples.assign(1000, 0.1F);
  audio::AudioClip noise;
  noise.sample_rate_hz = 16000;
  noise.samples.assign(5000, 0.5F);
  Rng rng(5);
  const auto r = mix_noise_detailed(clip, noise, 10.0, rng);
  CHECK(mean_power(r.signal) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(mean_power(r.noise) == doctest::Approx(0.001).epsilon(1e-6));
  CHECK(r.gain == doctest::Approx(std::sqrt(0.001 / 0.25)).epsilon(1e-9));

  CHECK(mix_noise(clip, noise, kCleanSnr, rng).samples == clip.samples);
  audio::AudioClip silent = clip;
  silent.samples.assign(1000, 0.0F);
  const auto s = mix_noise_detailed(silent, noise, 10.0, rng);
  CHECK(s.gain == 1.0);
  CHECK(s.mixed.samples[0] == 0.5F);

  audio::AudioClip loud = clip;
  loud.samples.assign(1000, 0.9F);
  for (float v : mix_noise(loud, noise, -10.0, rng).samples) REQUIRE((v >= -1.0F && v <= 1.0F));

  audio::AudioClip other_rate = noise;
  other_rate.sample_rate_hz = 8000;
  CHECK(code_of([&] { mix_noise(clip, other_rate, 10.0, rng); }) == Errc::RateMismatch);
  noise.samples.resize(10);
  CHECK(code_of([&] { mix_noise(clip, noise, 10.0, rng); }) == Errc::NoiseTooShort);
}

TEST_CASE("noise bank layout") {
  const testing::TempDir dir("noise");
  const auto& cats = default_noise_categories();
  CHECK(cats.size() == 5);
  for (const auto& c : cats) {
    std::filesystem::create_directories(dir / c);
    auto clip = noise_clip(8000, 1);
    clip.sample_rate_hz = 8000;
    audio::write_wav(dir / c / "a.wav", clip, audio::WavEncoding::Float32);
  }
  const auto bank = build_noise_bank(dir.path(), cats);
  CHECK(bank.clips.size() == 5);
  for (const auto& c : cats) {
    REQUIRE(bank.category(c).size() == 1);
    CHECK(bank.category(c)[0].sample_rate_hz == 16000);
    CHECK(bank.category(c)[0].samples.size() == 16000);
  }
  CHECK(code_of([&] { bank.category("street"); }) == Errc::MissingCategory);
  std::filesystem::create_directories(dir / "empty");
  const std::vector<std::string> with_empty{"bus", "empty"};
  CHECK(code_of([&] { build_noise_bank(dir.path(), with_empty); }) == Errc::MissingCategory);
  const std::vector<std::string> missing{"street"};
  CHECK(code_of([&] { build_noise_bank(dir.path(), missing); }) == Errc::MissingCategory);
}

TEST_CASE("synthetic dataset is deterministic and canonical") {
  const testing::TempDir dir("synth");
  const auto a = synth_dataset(16, 7, dir / "a");
  const auto b = synth_dataset(16, 7, dir / "b");
  REQUIRE(a.size() == 16);
  std::size_t screams = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(read_file(a.records[i].path) == read_file(b.records[i].path));
    const auto clip = audio::read_wav(a.records[i].path);
    CHECK(clip.sample_rate_hz == 16000);
    CHECK(clip.samples.size() == 48000);
    screams += *a.records[i].is_scream ? 1 : 0;
    if (*a.records[i].is_scream) CHECK(a.records[i].valence != Valence::Unknown);
  }
  CHECK(screams == 8);
  const auto reloaded = load_manifest(dir / "a" / "manifest.csv", LoadOptions{true});
  CHECK(reloaded.size() == 16);
  CHECK(std::filesystem::exists(dir / "a" / "streams" / "stream_scream.wav"));
  CHECK(std::filesystem::exists(dir / "a" / "streams" / "stream_nonscream.wav"));
  CHECK(code_of([&] { synth_dataset(1, 7, dir / "c"); }) == Errc::TooFewRecords);
}

TEST_CASE("synthetic classes are linearly separable on mean mel energy") {
  // Nearest class mean on the per-band mean is a linear rule.
  auto profile = [](SynthKind kind, std::uint64_t seed) {
    const auto spec = dsp::melspectrogram(synth_clip(kind, seed));
    std::vector<double> p(spec.bands(), 0.0);
    for (std::size_t r = 0; r < spec.bands(); ++r) {
      for (std::size_t c = 0; c < spec.frames(); ++c) p[r] += spec.values(r, c);
      p[r] /= static_cast<double>(spec.frames());
    }
    return p;
  };
  auto kind_of = [](int k, int i) {
    if (k == 0) return SynthKind::NonScream;
    return i % 2 == 0 ? SynthKind::ScreamNegative : SynthKind::ScreamPositive;
  };
  std::vector<double> mean[2] = {std::vector<double>(128, 0.0), std::vector<double>(128, 0.0)};
  const int n_fit = 10;
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < n_fit; ++i) {
      const auto p = profile(kind_of(k, i), 1000 + i);
      for (std::size_t b = 0; b < 128; ++b) mean[k][b] += p[b] / n_fit;
    }
  }
  int correct = 0, total = 0;
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 20; ++i) {
      const auto p = profile(kind_of(k, i), 5000 + i);
      double d[2] = {0.0, 0.0};
      for (int c = 0; c < 2; ++c) {
        for (std::size_t b = 0; b < 128; ++b) d[c] += (p[b] - mean[c][b]) * (p[b] - mean[c][b]);
      }
      correct += (d[1] < d[0] ? 1 : 0) == k ? 1 : 0;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total >= 0.9);
}
