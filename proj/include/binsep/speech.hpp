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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "binsep/audio.hpp"

namespace binsep {

// Seeded speech-like test signal: syllables of harmonic voicing shaped by
// three random formants, occasional fricative noise bursts, pauses, and a
// -60 dB noise floor. Its time-frequency occupancy is sparse the way speech
// is, which mask-based separation relies on. Peak amplitude is 0.9.
inline std::vector<double> synth_speech(double duration_s, std::uint64_t seed,
                                        int sample_rate = kPipelineRate) {
  constexpr double kPi = std::numbers::pi;
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  const double fs = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  std::vector<double> out(n, 0.0);

  std::size_t pos = static_cast<std::size_t>(uniform(0.0, 0.06) * fs);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(0.12, 0.30) * fs);
    const double level = uniform(0.4, 1.0);
    const bool voiced = uniform(0.0, 1.0) < 0.8;
    const bool fricative = !voiced || uniform(0.0, 1.0) < 0.25;

    if (voiced) {
      const double f0_start = uniform(90.0, 240.0);
      const double f0_end = f0_start * uniform(0.8, 1.2);
      const std::array<double, 3> formant{uniform(300.0, 900.0), uniform(900.0, 2400.0),
                                          uniform(2400.0, 3600.0)};
      const std::array<double, 3> width{uniform(60.0, 120.0), uniform(80.0, 160.0),
                                        uniform(120.0, 220.0)};
      const std::array<double, 3> gain{1.0, 0.6, 0.35};
      auto envelope = [&](double f) {
        double e = 0.01;
        for (int j = 0; j < 3; ++j) {
          const double d = (f - formant[j]) / width[j];
          e += gain[j] / (1.0 + d * d);
        }
        return e;
      };
      const int harmonics = static_cast<int>(7600.0 / std::max(f0_start, f0_end));
      std::vector<double> phase(harmonics + 1);
      for (auto& p : phase) p = uniform(0.0, 2.0 * kPi);
      double f0_phase = 0.0;
      for (std::size_t t = 0; t < len && pos + t < n; ++t) {
        const double u = double(t) / double(len);
        const double f0 = f0_start + (f0_end - f0_start) * u;
        f0_phase += 2.0 * kPi * f0 / fs;
        const double amp = std::pow(std::sin(kPi * u), 0.6);
        double s = 0.0;
        for (int h = 1; h <= harmonics; ++h)
          s += envelope(h * f0) * std::sin(h * f0_phase + phase[h]) / std::sqrt(double(h));
        out[pos + t] += level * amp * s * 0.25;
      }
    }
    if (fricative) {
      const auto flen = std::min<std::size_t>(len, static_cast<std::size_t>(uniform(0.05, 0.12) * fs));
      const std::size_t offset = voiced ? 0 : (len - flen) / 2;
      double prev = 0.0;
      for (std::size_t t = 0; t < flen && pos + offset + t < n; ++t) {
        const double u = double(t) / double(flen);
        const double w = normal(rng);
        const double hp = w - 0.95 * prev;  // crude high-pass emphasis
        prev = w;
        out[pos + offset + t] += level * 0.15 * std::sin(kPi * u) * hp;
      }
    }
    pos += len;
    const bool long_pause = uniform(0.0, 1.0) < 0.15;
    pos += static_cast<std::size_t>((long_pause ? uniform(0.2, 0.35) : uniform(0.03, 0.15)) * fs);
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.9 / peak;
  for (double& v : out) v += 1e-3 * 0.9 * normal(rng);
  peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  for (double& v : out) v *= 0.9 / peak;
  return out;
}

}  // namespace binsep
