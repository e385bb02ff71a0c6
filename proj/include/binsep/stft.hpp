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

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/error.hpp"
#include "binsep/fft.hpp"

namespace binsep {

using RealPlane = Eigen::ArrayXXd;
using ComplexPlane = Eigen::ArrayXXcd;

struct StftConfig {
  std::size_t frame_length = 1024;
  std::size_t hop = 256;
  int sample_rate = kPipelineRate;

  void validate() const {
    if (frame_length < 2 || frame_length % 2 != 0)
      throw Error(ErrorKind::kContract, "frame length must be even and >= 2");
    if (hop == 0 || frame_length % hop != 0)
      throw Error(ErrorKind::kContract, "hop must divide the frame length");
  }

  std::size_t num_bins() const { return frame_length / 2 + 1; }
  double bin_hz() const { return double(sample_rate) / frame_length; }

  // Frames after zero-padding the tail up to a whole frame.
  std::size_t num_frames(std::size_t len) const {
    return (len - frame_length + hop - 1) / hop + 1;
  }

  // Symmetric Hamming window, 0.54 - 0.46 cos(2 pi t / (L - 1)).
  std::vector<double> window() const {
    std::vector<double> w(frame_length);
    const double n = frame_length - 1;
    for (std::size_t t = 0; t < frame_length; ++t)
      w[t] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * t / n);
    return w;
  }
};

// One-sided STFT: rows are frequency bins 0..L/2, columns are frames.
struct Spectrogram {
  ComplexPlane values;
  double bin_hz = 0.0;

  Eigen::Index bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

inline Spectrogram stft(std::span<const double> signal, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.frame_length;
  if (signal.size() < L)
    throw Error(ErrorKind::kContract,
                "signal of " + std::to_string(signal.size()) +
                    " samples is shorter than one frame (" + std::to_string(L) + ")");
  const std::size_t frames = cfg.num_frames(signal.size());
  const auto window = cfg.window();
  auto& fft = real_fft(L);

  Spectrogram spec;
  spec.bin_hz = cfg.bin_hz();
  spec.values.resize(static_cast<Eigen::Index>(cfg.num_bins()),
                     static_cast<Eigen::Index>(frames));
  std::vector<double> frame(L);
  std::vector<std::complex<double>> bins(cfg.num_bins());
  for (std::size_t m = 0; m < frames; ++m) {
    const std::size_t start = m * cfg.hop;
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t i = start + t;
      frame[t] = i < signal.size() ? signal[i] * window[t] : 0.0;
    }
    fft.forward(frame, bins);
    for (std::size_t k = 0; k < bins.size(); ++k)
      spec.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = bins[k];
  }
  return spec;
}

// Weighted overlap-add with the analysis window reused for synthesis,
// normalized by the summed squared-window envelope (floored at 1e-8).
inline std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg,
                                 std::size_t out_len) {
  cfg.validate();
  const std::size_t L = cfg.frame_length;
  if (static_cast<std::size_t>(spec.bins()) != cfg.num_bins())
    throw Error(ErrorKind::kDimension,
                "spectrogram has " + std::to_string(spec.bins()) +
                    " bins, expected " + std::to_string(cfg.num_bins()));
  const auto frames = static_cast<std::size_t>(spec.frames());
  const auto window = cfg.window();
  auto& fft = real_fft(L);

  const std::size_t span_len = frames == 0 ? 0 : (frames - 1) * cfg.hop + L;
  std::vector<double> acc(std::max(span_len, out_len), 0.0);
  std::vector<double> envelope(acc.size(), 0.0);
  std::vector<std::complex<double>> bins(cfg.num_bins());
  std::vector<double> frame(L);
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t k = 0; k < bins.size(); ++k)
      bins[k] = spec.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    fft.inverse(bins, frame);
    const std::size_t start = m * cfg.hop;
    for (std::size_t t = 0; t < L; ++t) {
      acc[start + t] += frame[t] / double(L) * window[t];
      envelope[start + t] += window[t] * window[t];
    }
  }
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i)
    out[i] = acc[i] / std::max(envelope[i], 1e-8);
  return out;
}

struct StereoSpectrogram {
  Spectrogram left;
  Spectrogram right;
  std::size_t length = 0;  // time-domain samples of the source clip
};

inline StereoSpectrogram stft_stereo(const AudioClip& clip, const StftConfig& cfg) {
  require_stereo(clip, "stft");
  require_pipeline_rate(clip, "stft");
  return {stft(clip.left(), cfg), stft(clip.right(), cfg), clip.num_frames()};
}

}  // namespace binsep
