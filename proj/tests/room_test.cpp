// Copyright 2026 The binsep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "binsep/room.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "binsep/speech.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace binsep {
namespace {

using testing::TempDir;

std::size_t argmax_abs(const std::vector<double>& x) {
  return std::size_t(std::max_element(x.begin(), x.end(),
                                      [](double a, double b) { return std::abs(a) < std::abs(b); }) -
                     x.begin());
}

// Schroeder backward integration; least-squares line through the -10..-40 dB
// span of the decay curve, extrapolated to 60 dB.
double schroeder_rt60_ms(const std::vector<double>& h, int fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t n = h.size(); n-- > 0;) {
    acc += h[n] * h[n];
    edc[n] = acc;
  }
  std::vector<double> t, db;
  for (std::size_t n = 0; n < h.size(); ++n) {
    const double v = 10.0 * std::log10(edc[n] / edc[0]);
    if (v <= -10.0 && v >= -40.0) {
      t.push_back(double(n) / fs);
      db.push_back(v);
    }
  }
  const double n = double(t.size());
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double md = std::accumulate(db.begin(), db.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (db[i] - md);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  return -60.0 / (sxy / sxx) * 1000.0;
}

TEST(Geometry, PlaneWaveDelayAndShadow) {
  EXPECT_NEAR(SourceGeometry{90.0}.interaural_delay(), 0.175 / 343.0 * 16000.0, 1e-12);
  EXPECT_NEAR(SourceGeometry{90.0}.interaural_delay(), 8.16, 0.01);
  EXPECT_NEAR(SourceGeometry{30.0}.level_difference_db(), 3.0, 1e-12);
  EXPECT_EQ(SourceGeometry{0.0}.interaural_delay(), 0.0);
}

TEST(StandardRooms, TableValues) {
  const auto& rooms = standard_rooms();
  ASSERT_EQ(rooms.size(), 5u);
  EXPECT_EQ(room_by_name("A").rt60_ms, 320.0);
  EXPECT_EQ(*room_by_name("A").drr_db, 6.09);
  EXPECT_EQ(room_by_name("D").rt60_ms, 890.0);
  EXPECT_FALSE(room_by_name("X").drr_db.has_value());
  EXPECT_THROW(room_by_name("Z"), Error);
}

TEST(SynthRir, AnechoicFrontalIsIdenticalImpulses) {
  const AudioClip rir = synth_rir(room_by_name("X"), {0.0}, 1);
  EXPECT_EQ(rir.left(), rir.right());
  std::size_t nonzero = 0;
  for (double v : rir.left()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 1u);
  EXPECT_EQ(rir.left()[24], 1.0);
}

TEST(SynthRir, LeftLeadsForPositiveAzimuth) {
  for (double az : {15.0, 45.0, 90.0}) {
    const AudioClip rir = synth_rir(room_by_name("X"), {az}, 1);
    EXPECT_LT(argmax_abs(rir.left()), argmax_abs(rir.right())) << az;
    const double delay = SourceGeometry{az}.interaural_delay();
    EXPECT_EQ(argmax_abs(rir.right()), 24 + std::size_t(std::llround(delay))) << az;
  }
}

TEST(SynthRir, FractionalDelayHasCorrectGroupDelay) {
  // Energy centroid of the right ear sits at the fractional position.
  const AudioClip rir = direct_path_rir(2.5, 0.0);
  const auto& r = rir.right();
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < r.size(); ++n) {
    num += double(n) * r[n];
    den += r[n];
  }
  EXPECT_NEAR(num / den, 26.5, 0.05);
}

TEST(SynthRir, SchroederDecayMatchesRt60) {
  for (const char* name : {"A", "D"}) {
    const RoomSpec& room = room_by_name(name);
    const AudioClip rir = synth_rir(room, {30.0}, 7);
    for (const auto& ch : rir.channels)
      EXPECT_NEAR(schroeder_rt60_ms(ch, 16000), room.rt60_ms, 0.1 * room.rt60_ms) << name;
  }
}

TEST(SynthRir, DirectToReverberantRatio) {
  const RoomSpec& room = room_by_name("B");
  const AudioClip rir = synth_rir(room, {45.0}, 3);
  // The tail starts 17 samples after the last direct-path sample slot.
  const std::size_t tail_start =
      24 + std::size_t(std::ceil(SourceGeometry{45.0}.interaural_delay())) + 17;
  for (const auto& ch : rir.channels) {
    double direct = 0.0, tail = 0.0;
    for (std::size_t n = 0; n < ch.size(); ++n) (n < tail_start ? direct : tail) += ch[n] * ch[n];
    EXPECT_NEAR(10.0 * std::log10(direct / tail), *room.drr_db, 1e-9);
  }
}

TEST(SynthRir, SeedReproducible) {
  const RoomSpec& room = room_by_name("C");
  const auto a = synth_rir(room, {60.0}, 99), b = synth_rir(room, {60.0}, 99),
             c = synth_rir(room, {60.0}, 100);
  EXPECT_EQ(a.channels, b.channels);
  EXPECT_NE(a.channels, c.channels);
}

TEST(MakeMixture, ImpulseRirReproducesNormalizedSource) {
  const auto s = synth_speech(0.5, 1);
  const double peak = std::abs(s[argmax_abs(s)]);
  const Mixture m = make_mixture({AudioClip::mono(s)}, {AudioClip::stereo({1.0}, {1.0})});
  ASSERT_EQ(m.mixture.num_frames(), s.size());
  for (std::size_t n = 0; n < s.size(); ++n) {
    EXPECT_EQ(m.mixture.left()[n], s[n] / peak);
    EXPECT_EQ(m.mixture.right()[n], s[n] / peak);
  }
}

TEST(MakeMixture, DeltaRirsSumExactly) {
  const auto a = synth_speech(0.5, 2), b = synth_speech(0.5, 3);
  const double pa = std::abs(a[argmax_abs(a)]), pb = std::abs(b[argmax_abs(b)]);
  const AudioClip delta = AudioClip::stereo({1.0}, {1.0});
  const Mixture m = make_mixture({AudioClip::mono(a), AudioClip::mono(b)}, {delta, delta});
  for (std::size_t n = 0; n < a.size(); ++n) EXPECT_EQ(m.mixture.left()[n], a[n] / pa + b[n] / pb);
  const auto ref = m.reference(0);
  EXPECT_EQ(ref[10], 2.0 * a[10] / pa);
}

TEST(MakeMixture, FullConvolutionLength) {
  const auto s = synth_speech(0.3, 4);
  const AudioClip rir = synth_rir(room_by_name("A"), {30.0}, 5);
  const Mixture m = make_mixture({AudioClip::mono(s)}, {rir});
  EXPECT_EQ(m.mixture.num_frames(), s.size() + rir.num_frames() - 1);
}

TEST(MakeMixture, Linearity) {
  const auto a = synth_speech(0.4, 6), b = synth_speech(0.4, 7);
  const std::vector<AudioClip> rirs = {synth_rir(room_by_name("A"), {45.0}, 1),
                                       direct_path_rir(-3.25, 2.0)};
  auto scaled = [](std::vector<double> x, double g) {
    for (double& v : x) v *= g;
    return AudioClip::mono(std::move(x));
  };
  const Mixture base = make_mixture({AudioClip::mono(a), AudioClip::mono(b)}, rirs, false);
  // Power-of-two gains commute exactly with every rounding step.
  const Mixture exact = make_mixture({scaled(a, 0.5), scaled(b, 4.0)}, rirs, false);
  const Mixture general = make_mixture({scaled(a, 0.3), scaled(b, 1.7)}, rirs, false);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t n = 0; n < base.mixture.num_frames(); ++n) {
      const double ia = base.images[0].channels[c][n], ib = base.images[1].channels[c][n];
      EXPECT_EQ(exact.mixture.channels[c][n], 0.5 * ia + 4.0 * ib);
      EXPECT_NEAR(general.mixture.channels[c][n], 0.3 * ia + 1.7 * ib, 1e-12);
    }
}

TEST(MakeMixture, ContractErrors) {
  const AudioClip delta = AudioClip::stereo({1.0}, {1.0});
  EXPECT_THROW(make_mixture({AudioClip::mono({})}, {delta}), Error);
  EXPECT_THROW(make_mixture({AudioClip::mono({0.1, 0.2}, 48000)}, {delta}), Error);
  EXPECT_THROW(make_mixture({AudioClip::mono({0.1})}, {}), Error);
}

TEST(LoadRirSet, LoadsResamplesAndNamesMissingPath) {
  TempDir dir;
  std::filesystem::create_directories(dir / "A");
  AudioClip rir = synth_rir(room_by_name("A"), {30.0}, 1);
  for (auto& ch : rir.channels)
    for (double& v : ch) v *= 0.5;  // stay inside [-1, 1]
  write_wav(AudioClip::mono(rir.left()), dir.path() / "A" / "30_L.wav", WavEncoding::kFloat32);
  write_wav(AudioClip::mono(rir.right()), dir.path() / "A" / "30_R.wav", WavEncoding::kFloat32);
  std::vector<double> up(3 * 1000, 0.0);
  up[300] = 0.5;
  write_wav(AudioClip::mono(up, 48000), dir.path() / "A" / "45_L.wav", WavEncoding::kFloat32);
  write_wav(AudioClip::mono(up, 48000), dir.path() / "A" / "45_R.wav", WavEncoding::kFloat32);

  const AudioClip loaded = load_rir_set(dir.path(), "A", 30.0);
  EXPECT_EQ(loaded.num_frames(), rir.num_frames());
  EXPECT_NEAR(loaded.left()[24], rir.left()[24], 1e-7);
  const AudioClip resampled = load_rir_set(dir.path(), "A", 45.0);
  EXPECT_EQ(resampled.sample_rate, 16000);
  EXPECT_EQ(resampled.num_frames(), 1000u);
  try {
    load_rir_set(dir.path(), "A", 60.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find((dir.path() / "A" / "60_L.wav").string()),
              std::string::npos);
  }
}

TEST(Manifest, RoundTrip) {
  TempDir dir;
  ManifestRecord r{"X_90_t0", "X", 90.0, 0.0, 42, "X_90_t0_mix.wav", {"a.wav", "b.wav"}};
  {
    std::ofstream out(dir / "m.jsonl");
    out << r.to_json().dump() << '\n' << r.to_json().dump() << '\n';
  }
  const auto rows = read_manifest(dir / "m.jsonl");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].trial_id, "X_90_t0");
  EXPECT_EQ(rows[1].azimuth_deg, 90.0);
  EXPECT_EQ(rows[1].seed, 42u);
  EXPECT_EQ(rows[1].references, r.references);
}

TEST(SynthSpeech, DeterministicAndNeverDigitallySilent) {
  const auto a = synth_speech(1.05, 9), b = synth_speech(1.05, 9), c = synth_speech(1.05, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.size(), 16800u);
  EXPECT_NEAR(std::abs(a[argmax_abs(a)]), 0.9, 1e-12);
  std::size_t zeros = 0;
  for (double v : a) zeros += v == 0.0;
  EXPECT_LT(zeros, 10u);
}

}  // namespace
}  // namespace binsep
