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

#include "binsep/audio.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace binsep {
namespace {

using testing::TempDir;

// Minimal PCM16 WAV with a caller-chosen data payload size.
std::vector<unsigned char> pcm16_header(std::uint16_t channels, std::uint32_t data_bytes) {
  std::vector<unsigned char> b;
  detail::put_tag(b, "RIFF");
  detail::put32(b, 36 + data_bytes);
  detail::put_tag(b, "WAVE");
  detail::put_tag(b, "fmt ");
  detail::put32(b, 16);
  detail::put16(b, 1);
  detail::put16(b, channels);
  detail::put32(b, 16000);
  detail::put32(b, 16000u * channels * 2);
  detail::put16(b, static_cast<std::uint16_t>(channels * 2));
  detail::put16(b, 16);
  detail::put_tag(b, "data");
  detail::put32(b, data_bytes);
  return b;
}

TEST(Wav, SilenceRoundTrip) {
  TempDir dir;
  write_wav(AudioClip::mono(std::vector<double>(16000, 0.0)), dir / "s.wav");
  const AudioClip clip = read_wav(dir / "s.wav");
  EXPECT_EQ(clip.sample_rate, 16000);
  ASSERT_EQ(clip.num_channels(), 1u);
  ASSERT_EQ(clip.num_frames(), 16000u);
  for (double v : clip.channels[0]) EXPECT_EQ(v, 0.0);
}

TEST(Wav, FullScaleSampleNormalization) {
  TempDir dir;
  auto bytes = pcm16_header(1, 2);
  detail::put16(bytes, 32767);
  testing::write_bytes(dir / "f.wav", bytes);
  const AudioClip clip = read_wav(dir / "f.wav");
  ASSERT_EQ(clip.num_frames(), 1u);
  EXPECT_EQ(clip.channels[0][0], 32767.0 / 32768.0);
}

TEST(Wav, UnequalStereoPayloadIsMalformed) {
  TempDir dir;
  auto bytes = pcm16_header(2, 6);  // one full frame plus half a frame
  for (int i = 0; i < 3; ++i) detail::put16(bytes, 100);
  testing::write_bytes(dir / "u.wav", bytes);
  try {
    read_wav(dir / "u.wav");
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(Wav, ZeroLengthAndUnsupportedEncoding) {
  TempDir dir;
  testing::write_bytes(dir / "z.wav", pcm16_header(1, 0));
  EXPECT_THROW(read_wav(dir / "z.wav"), Error);

  auto bytes = pcm16_header(1, 3);
  bytes[34] = 24;  // bits per sample
  bytes.insert(bytes.end(), {1, 2, 3});
  testing::write_bytes(dir / "b.wav", bytes);
  EXPECT_THROW(read_wav(dir / "b.wav"), Error);
  EXPECT_THROW(read_wav(dir / "missing.wav"), Error);
}

TEST(Wav, ToneRoundTripWithinOneLsb) {
  TempDir dir;
  std::vector<double> tone(8000);
  for (std::size_t n = 0; n < tone.size(); ++n)
    tone[n] = 0.8 * std::sin(2.0 * std::numbers::pi * 440.0 * double(n) / 16000.0);
  EXPECT_EQ(write_wav(AudioClip::mono(tone), dir / "t.wav"), 0u);
  const AudioClip back = read_wav(dir / "t.wav");
  for (std::size_t n = 0; n < tone.size(); ++n)
    EXPECT_LE(std::abs(back.channels[0][n] - tone[n]), 1.0 / 32768.0);
}

TEST(Wav, FloatRoundTripIsExactForFloatValues) {
  TempDir dir;
  const auto x = testing::white_noise(1000, 3, 0.2);
  std::vector<double> l(x.begin(), x.end()), r(x.rbegin(), x.rend());
  for (auto* ch : {&l, &r})
    for (double& v : *ch) v = static_cast<float>(std::clamp(v, -1.0, 1.0));
  write_wav(AudioClip::stereo(l, r), dir / "f.wav", WavEncoding::kFloat32);
  const AudioClip back = read_wav(dir / "f.wav");
  EXPECT_EQ(back.channels[0], l);
  EXPECT_EQ(back.channels[1], r);
}

TEST(Wav, ClippingIsCountedAndWarned) {
  TempDir dir;
  std::vector<std::string> warnings;
  auto previous = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
  const std::size_t clipped =
      write_wav(AudioClip::mono({0.5, 2.0, -3.0, 1.0}), dir / "c.wav");
  set_warning_sink(previous);
  EXPECT_EQ(clipped, 2u);
  EXPECT_EQ(warnings.size(), 1u);
  const AudioClip back = read_wav(dir / "c.wav");
  EXPECT_NEAR(back.channels[0][1], 1.0, 1.0 / 32768.0);
  EXPECT_NEAR(back.channels[0][2], -1.0, 1.0 / 32768.0);
}

TEST(Wav, EmptyOrNonFiniteClipIsRejected) {
  TempDir dir;
  EXPECT_THROW(write_wav(AudioClip::mono({}), dir / "e.wav"), Error);
  EXPECT_THROW(write_wav(AudioClip::mono({0.0, std::nan("")}), dir / "n.wav"), Error);
  EXPECT_THROW(write_wav(AudioClip::mono({0.0}), dir / "no_such_dir" / "x.wav"), Error);
}

TEST(Resample, SixteenKiloHertzIsIdentity) {
  const AudioClip in = AudioClip::mono(testing::white_noise(500, 1));
  const AudioClip out = resample_to_16k(in);
  EXPECT_EQ(out.sample_rate, 16000);
  EXPECT_EQ(out.channels, in.channels);
}

TEST(Resample, FortyEightKiloHertzSineMatchesAnalyticSine) {
  constexpr double kF = 1000.0;
  std::vector<double> x(48000);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = std::sin(2.0 * std::numbers::pi * kF * double(n) / 48000.0);
  const AudioClip out = resample_to_16k(AudioClip::mono(x, 48000));
  EXPECT_EQ(out.sample_rate, 16000);
  ASSERT_EQ(out.num_frames(), 16000u);
  // Filter settling: skip 20 ms at either end.
  double worst = 0.0;
  for (std::size_t n = 320; n + 320 < out.num_frames(); ++n) {
    const double expected = std::sin(2.0 * std::numbers::pi * kF * double(n) / 16000.0);
    worst = std::max(worst, std::abs(out.channels[0][n] - expected));
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Resample, AliasedToneIsSuppressed) {
  // 12 kHz folds onto 4 kHz after naive decimation; the low-pass removes it.
  std::vector<double> x(48000);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = std::sin(2.0 * std::numbers::pi * 12000.0 * double(n) / 48000.0 + 0.3);
  const auto y = resample_poly(x, 1, 3);
  double peak = 0.0;
  for (std::size_t n = 500; n + 500 < y.size(); ++n) peak = std::max(peak, std::abs(y[n]));
  EXPECT_LT(20.0 * std::log10(peak), -60.0);
}

TEST(Resample, DurationPreservedWithinOneSample) {
  for (std::size_t len : {3u, 299u, 48000u, 48001u, 48002u}) {
    const AudioClip out = resample_to_16k(AudioClip::mono(std::vector<double>(len, 0.1), 48000));
    EXPECT_LE(std::abs(double(out.num_frames()) - double(len) / 3.0), 1.0) << len;
  }
}

TEST(Resample, UnsupportedRateIsRejected) {
  try {
    resample_to_16k(AudioClip::mono(std::vector<double>(100, 0.0), 44100));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

}  // namespace
}  // namespace binsep
