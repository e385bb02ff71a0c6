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

#include "binsep/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace binsep {
namespace {

// Straight O(L^2) DFT, bins 0..L/2.
std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t L = x.size();
  std::vector<std::complex<double>> out(L / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < L; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t % L) / double(L));
    out[k] = acc;
  }
  return out;
}

TEST(StftConfig, Defaults) {
  const StftConfig cfg;
  EXPECT_EQ(cfg.num_bins(), 513u);
  EXPECT_DOUBLE_EQ(cfg.bin_hz(), 15.625);
  EXPECT_EQ(cfg.num_frames(4096), 13u);
  EXPECT_EQ(cfg.num_frames(1024), 1u);
  EXPECT_EQ(cfg.num_frames(1025), 2u);
  const auto w = cfg.window();
  EXPECT_DOUBLE_EQ(w.front(), 0.08);
  EXPECT_DOUBLE_EQ(w.back(), 0.08);
  EXPECT_THROW((StftConfig{1024, 300}.validate()), Error);
}

TEST(Stft, ZeroSignal) {
  const auto spec = stft(std::vector<double>(4096, 0.0), {});
  EXPECT_EQ(spec.bins(), 513);
  EXPECT_EQ(spec.frames(), 13);
  EXPECT_EQ(spec.values.abs().maxCoeff(), 0.0);
}

TEST(Stft, ShorterThanOneFrameIsRejected) {
  try {
    stft(std::vector<double>(1023, 1.0), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Stft, BinCenteredCosineSidelobes) {
  constexpr std::size_t kBin = 64;
  std::vector<double> x(4096);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = std::cos(2.0 * std::numbers::pi * double(kBin) * double(n) / 1024.0);
  const auto spec = stft(x, {});
  for (Eigen::Index m = 0; m < spec.frames(); ++m) {
    const auto col = spec.values.col(m).abs();
    Eigen::Index peak;
    col.maxCoeff(&peak);
    EXPECT_EQ(peak, Eigen::Index(kBin));
    for (Eigen::Index k = 0; k < col.size(); ++k) {
      if (std::abs(k - Eigen::Index(kBin)) >= 2) {
        EXPECT_LE(20.0 * std::log10(col(k) / col(peak) + 1e-300), -40.0) << k;
      }
    }
  }
}

TEST(Stft, ImpulseMatchesDirectDft) {
  // An impulse at the frame center windows to w[512] * delta, so its column
  // is flat with a linear phase.
  std::vector<double> x(1024, 0.0);
  x[512] = 1.0;
  const StftConfig cfg;
  const auto spec = stft(x, cfg);
  std::vector<double> frame(1024, 0.0);
  frame[512] = cfg.window()[512];
  const auto oracle = direct_dft(frame);
  for (std::size_t k = 0; k < oracle.size(); ++k)
    EXPECT_LT(std::abs(spec.values(Eigen::Index(k), 0) - oracle[k]), 1e-12);
  EXPECT_NEAR(std::abs(spec.values(100, 0)), cfg.window()[512], 1e-12);
}

TEST(Stft, ConstantSignalGivesWindowSpectrum) {
  const StftConfig cfg;
  const auto spec = stft(std::vector<double>(1024, 1.0), cfg);
  const auto oracle = direct_dft(cfg.window());
  for (std::size_t k = 0; k < oracle.size(); ++k)
    EXPECT_NEAR(std::abs(spec.values(Eigen::Index(k), 0)), std::abs(oracle[k]), 1e-9);
}

TEST(Stft, ParsevalPerFrame) {
  const StftConfig cfg;
  const auto x = testing::white_noise(3000, 11);
  const auto spec = stft(x, cfg);
  const auto w = cfg.window();
  for (Eigen::Index m = 0; m < spec.frames(); ++m) {
    double time_energy = 0.0;
    for (std::size_t t = 0; t < 1024; ++t) {
      const std::size_t i = std::size_t(m) * 256 + t;
      const double v = i < x.size() ? x[i] * w[t] : 0.0;
      time_energy += v * v;
    }
    const auto p = spec.values.col(m).abs2();
    const double freq_energy = (p(0) + p(512) + 2.0 * p.segment(1, 511).sum()) / 1024.0;
    EXPECT_NEAR(freq_energy / time_energy, 1.0, 1e-9);
  }
}

TEST(Istft, RoundTripInterior) {
  const StftConfig cfg;
  const auto x = testing::white_noise(16800, 5);
  const auto y = istft(stft(x, cfg), cfg, x.size());
  ASSERT_EQ(y.size(), x.size());
  EXPECT_GE(testing::snr_db(x, y, 1024, x.size() - 1024), 60.0);
}

TEST(Istft, ZeroSpectrogramAndBadShape) {
  const StftConfig cfg;
  Spectrogram zero{ComplexPlane::Zero(513, 9), cfg.bin_hz()};
  for (double v : istft(zero, cfg, 3000)) EXPECT_EQ(v, 0.0);
  Spectrogram bad{ComplexPlane::Zero(512, 9), cfg.bin_hz()};
  try {
    istft(bad, cfg, 3000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
}

TEST(Istft, OutputLengthPadsAndTruncates) {
  const StftConfig cfg;
  const auto x = testing::white_noise(2048, 9);
  const auto spec = stft(x, cfg);
  EXPECT_EQ(istft(spec, cfg, 100).size(), 100u);
  const auto longer = istft(spec, cfg, 5000);
  EXPECT_EQ(longer.size(), 5000u);
  EXPECT_EQ(longer.back(), 0.0);
}

}  // namespace
}  // namespace binsep
