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

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "binsep/error.hpp"
#include "binsep/stft.hpp"

namespace binsep {

inline constexpr double kMagnitudeFloor = 1e-10;

// Wraps an angle into (-pi, pi].
inline double wrap_phase(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, kTwoPi);
  if (w <= -std::numbers::pi) w += kTwoPi;
  return w;
}

// Candidate interaural delays in samples.
struct TauGrid {
  std::vector<double> values;

  static TauGrid uniform(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo)
      throw Error(ErrorKind::kContract, "invalid delay grid");
    TauGrid grid;
    const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
    for (std::size_t i = 0; i < count; ++i) grid.values.push_back(lo + i * step);
    return grid;
  }

  // -15..15 samples in half-sample steps (61 delays, about +-1 ms at 16 kHz).
  static TauGrid standard() { return uniform(-15.0, 15.0, 0.5); }

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

struct InterauralFeatures {
  RealPlane ild_db;
  RealPlane ipd;
  ComplexPlane ratio;

  Eigen::Index bins() const { return ratio.rows(); }
  Eigen::Index frames() const { return ratio.cols(); }
  std::size_t frame_length() const { return 2 * (static_cast<std::size_t>(bins()) - 1); }

  // Radian frequency of bin k in rad/sample.
  double omega(Eigen::Index k) const {
    return 2.0 * std::numbers::pi * double(k) / double(frame_length());
  }
};

inline InterauralFeatures interaural_features(const Spectrogram& left,
                                              const Spectrogram& right) {
  if (left.bins() != right.bins() || left.frames() != right.frames())
    throw Error(ErrorKind::kDimension, "left/right spectrograms differ in shape");
  if (left.bins() < 2)
    throw Error(ErrorKind::kDimension, "spectrogram needs at least two bins");
  InterauralFeatures f;
  const auto K = left.bins(), M = left.frames();
  f.ratio.resize(K, M);
  f.ild_db.resize(K, M);
  f.ipd.resize(K, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index k = 0; k < K; ++k) {
      std::complex<double> den = right.values(k, m);
      const double mag = std::abs(den);
      if (mag < kMagnitudeFloor)
        den = mag > 0.0 ? den * (kMagnitudeFloor / mag)
                        : std::complex<double>(kMagnitudeFloor, 0.0);
      const std::complex<double> r = left.values(k, m) / den;
      f.ratio(k, m) = r;
      f.ild_db(k, m) = 20.0 * std::log10(std::abs(r) + kMagnitudeFloor);
      f.ipd(k, m) = wrap_phase(std::arg(r));
    }
  }
  return f;
}

inline InterauralFeatures interaural_features(const StereoSpectrogram& spec) {
  return interaural_features(spec.left, spec.right);
}

// Residual between the observed IPD and the IPD a delay of `tau` samples would
// produce: angle(ratio * exp(-j * omega * tau)), wrapped into (-pi, pi].
inline RealPlane phase_residual(const InterauralFeatures& f, double tau) {
  if (!std::isfinite(tau)) throw Error(ErrorKind::kContract, "delay must be finite");
  RealPlane out(f.bins(), f.frames());
  for (Eigen::Index k = 0; k < f.bins(); ++k) {
    const std::complex<double> rot = std::polar(1.0, -f.omega(k) * tau);
    for (Eigen::Index m = 0; m < f.frames(); ++m)
      out(k, m) = wrap_phase(std::arg(f.ratio(k, m) * rot));
  }
  return out;
}

}  // namespace binsep
