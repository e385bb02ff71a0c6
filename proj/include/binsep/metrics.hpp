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
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/error.hpp"
#include "binsep/fft.hpp"

namespace binsep {

// Ordering of estimates against references: order[j] is the index of the
// estimate that corresponds to reference j.
struct Permutation {
  std::vector<std::size_t> order;

  static Permutation identity(std::size_t n) {
    Permutation p;
    p.order.resize(n);
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    return p;
  }

  std::size_t size() const { return order.size(); }
  std::size_t operator[](std::size_t j) const { return order[j]; }

  bool is_valid() const {
    std::vector<bool> seen(order.size(), false);
    for (std::size_t v : order) {
      if (v >= order.size() || seen[v]) return false;
      seen[v] = true;
    }
    return true;
  }

  bool is_identity() const {
    for (std::size_t j = 0; j < order.size(); ++j)
      if (order[j] != j) return false;
    return true;
  }

  // 1-based rendering, e.g. "2,1".
  std::string to_string() const {
    std::string s;
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (j) s += ',';
      s += std::to_string(order[j] + 1);
    }
    return s;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
};

inline constexpr double kSdrCapDb = 100.0;
inline constexpr std::size_t kSdrFilterTaps = 512;

// Projection of signals onto the span of one reference and its delayed
// copies (delays 0..taps-1). The Gram matrix is factored once.
class DelaySpanProjector {
 public:
  DelaySpanProjector(std::span<const double> reference, std::size_t length,
                     std::size_t taps)
      : reference_(reference.begin(), reference.end()), taps_(taps) {
    reference_.resize(length, 0.0);
    const auto acf = cross_correlation(reference_, reference_, taps);
    if (!(acf[0] > 0.0))
      throw Error(ErrorKind::kContract, "reference signal has zero energy");
    Eigen::MatrixXd gram(taps, taps);
    for (std::size_t i = 0; i < taps; ++i)
      for (std::size_t j = 0; j < taps; ++j)
        gram(i, j) = acf[i > j ? i - j : j - i];
    // Tiny ridge keeps band-limited references solvable.
    gram.diagonal().array() += 1e-10 * acf[0];
    ldlt_.compute(gram);
  }

  // Filtered reference closest to `signal`; length length + taps - 1.
  std::vector<double> project(std::span<const double> signal) const {
    const auto xc = cross_correlation(signal, reference_, taps_);
    Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(xc.data(), taps_);
    Eigen::VectorXd coeffs = ldlt_.solve(rhs);
    std::vector<double> filt(coeffs.data(), coeffs.data() + taps_);
    return convolve(reference_, filt);
  }

 private:
  std::vector<double> reference_;
  std::size_t taps_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

namespace detail {
inline double sdr_from_projection(std::span<const double> estimate,
                                  const std::vector<double>& target) {
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < target.size(); ++n) {
    const double e = n < estimate.size() ? estimate[n] : 0.0;
    num += target[n] * target[n];
    den += (e - target[n]) * (e - target[n]);
  }
  if (den <= 0.0) return kSdrCapDb;
  if (num <= 0.0) return -kSdrCapDb;
  return std::min(10.0 * std::log10(num / den), kSdrCapDb);
}
}  // namespace detail

struct SdrResult {
  std::vector<double> sdr_db;  // per reference, under `perm`
  Permutation perm;
  Eigen::MatrixXd matrix;      // matrix(i, j): estimate i against reference j
  bool ambiguous = false;      // another ordering scored the same
};

// SDR with the distortion-allowed decomposition: the target component of an
// estimate is its projection onto the reference filtered by a 512-tap FIR.
// The reported ordering maximizes summed SDR; ties keep the earliest
// ordering in lexicographic order, so identity wins.
inline SdrResult bss_eval_sdr(const std::vector<std::vector<double>>& estimates,
                              const std::vector<std::vector<double>>& references,
                              std::size_t taps = kSdrFilterTaps) {
  const std::size_t n = references.size();
  if (n == 0 || estimates.size() != n)
    throw Error(ErrorKind::kContract, "estimate and reference counts differ");
  std::size_t length = 0;
  for (const auto& v : estimates) length = std::max(length, v.size());
  for (const auto& v : references) length = std::max(length, v.size());

  SdrResult out;
  out.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    DelaySpanProjector projector(references[j], length, taps);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> est = estimates[i];
      est.resize(length, 0.0);
      out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::sdr_from_projection(est, projector.project(est));
    }
  }

  Permutation candidate = Permutation::identity(n);
  double best = -std::numeric_limits<double>::infinity();
  constexpr double kTieDb = 1e-9;
  do {
    double score = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      score += out.matrix(static_cast<Eigen::Index>(candidate[j]), static_cast<Eigen::Index>(j));
    if (score > best + kTieDb) {
      out.ambiguous = false;
      best = score;
      out.perm = candidate;
    } else if (std::abs(score - best) <= kTieDb) {
      out.ambiguous = true;
    }
  } while (std::next_permutation(candidate.order.begin(), candidate.order.end()));

  for (std::size_t j = 0; j < n; ++j)
    out.sdr_db.push_back(
        out.matrix(static_cast<Eigen::Index>(out.perm[j]), static_cast<Eigen::Index>(j)));
  return out;
}

namespace detail {

inline constexpr double kStoiEps = std::numeric_limits<double>::epsilon();

// Hann window without the zero end points, as the STOI reference code uses.
inline std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i + 1) / double(n + 1));
  return w;
}

// Drops frames of both signals where the reference is more than `range_db`
// below its loudest frame, then overlap-adds the surviving frames.
inline void remove_silent_frames(std::vector<double>& ref, std::vector<double>& est,
                                 double range_db, std::size_t len, std::size_t hop) {
  const auto w = stoi_window(len);
  std::vector<std::size_t> starts;
  std::vector<double> energy;
  for (std::size_t s = 0; s + len < ref.size(); s += hop) {
    double e = 0.0;
    for (std::size_t t = 0; t < len; ++t) e += (w[t] * ref[s + t]) * (w[t] * ref[s + t]);
    starts.push_back(s);
    energy.push_back(20.0 * std::log10(std::sqrt(e) + kStoiEps));
  }
  if (starts.empty()) {
    ref.clear();
    est.clear();
    return;
  }
  const double top = *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f)
    if (top - range_db - energy[f] < 0.0) kept.push_back(starts[f]);
  const std::size_t out_len = (kept.size() - 1) * hop + len;
  std::vector<double> r(out_len, 0.0), e(out_len, 0.0);
  for (std::size_t f = 0; f < kept.size(); ++f)
    for (std::size_t t = 0; t < len; ++t) {
      r[f * hop + t] += w[t] * ref[kept[f] + t];
      e[f * hop + t] += w[t] * est[kept[f] + t];
    }
  ref = std::move(r);
  est = std::move(e);
}

// Magnitude-squared STFT, frames as rows of `bins` values.
inline std::vector<std::vector<double>> stoi_power_frames(const std::vector<double>& x,
                                                          std::size_t len, std::size_t nfft,
                                                          std::size_t hop) {
  const auto w = stoi_window(len);
  auto& fft = real_fft(nfft);
  std::vector<std::vector<double>> out;
  std::vector<double> frame(len);
  std::vector<std::complex<double>> spec(fft.bins());
  for (std::size_t s = 0; s + len < x.size(); s += hop) {
    for (std::size_t t = 0; t < len; ++t) frame[t] = w[t] * x[s + t];
    fft.forward(frame, spec);
    std::vector<double> p(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) p[k] = std::norm(spec[k]);
    out.push_back(std::move(p));
  }
  return out;
}

// One-third octave band bin ranges [lo, hi) for the STOI filterbank.
inline std::vector<std::pair<std::size_t, std::size_t>> third_octave_bands(
    double fs, std::size_t nfft, std::size_t bands, double min_freq) {
  const std::size_t nbins = nfft / 2 + 1;
  auto nearest = [&](double f) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nbins; ++k) {
      const double d = std::abs(fs * double(k) / double(nfft) - f);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  };
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = min_freq * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    const double hi = min_freq * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    out.emplace_back(nearest(lo), nearest(hi));
  }
  return out;
}

}  // namespace detail

// Short-time objective intelligibility of `estimate` given the clean
// `reference`: 10 kHz, 256-sample Hann frames at 50% overlap, silent-frame
// removal at 40 dB, 15 third-octave bands from 150 Hz, 30-frame segments with
// normalization and -15 dB clipping, mean envelope correlation.
inline double stoi(std::span<const double> estimate, std::span<const double> reference,
                   int sample_rate = kPipelineRate) {
  constexpr int kStoiRate = 10000;
  constexpr std::size_t kFrame = 256, kFft = 512, kHop = 128, kSegment = 30, kBands = 15;
  constexpr double kRangeDb = 40.0, kMinFreq = 150.0, kBeta = -15.0;

  const std::size_t n = std::max(estimate.size(), reference.size());
  std::vector<double> x(reference.begin(), reference.end()), y(estimate.begin(), estimate.end());
  x.resize(n, 0.0);
  y.resize(n, 0.0);
  if (sample_rate != kStoiRate) {
    const int g = std::gcd(kStoiRate, sample_rate);
    x = resample_poly(x, kStoiRate / g, sample_rate / g);
    y = resample_poly(y, kStoiRate / g, sample_rate / g);
  }
  detail::remove_silent_frames(x, y, kRangeDb, kFrame, kHop);
  const auto xp = detail::stoi_power_frames(x, kFrame, kFft, kHop);
  const auto yp = detail::stoi_power_frames(y, kFrame, kFft, kHop);
  if (xp.size() < kSegment)
    throw Error(ErrorKind::kContract,
                "signal too short for STOI after silence removal (" +
                    std::to_string(xp.size()) + " frames, need " +
                    std::to_string(kSegment) + ")");

  const auto bands = detail::third_octave_bands(kStoiRate, kFft, kBands, kMinFreq);
  const std::size_t frames = xp.size();
  // Band envelopes, [band][frame].
  std::vector<std::vector<double>> xe(kBands, std::vector<double>(frames)),
      ye(kBands, std::vector<double>(frames));
  for (std::size_t b = 0; b < kBands; ++b)
    for (std::size_t f = 0; f < frames; ++f) {
      double sx = 0.0, sy = 0.0;
      for (std::size_t k = bands[b].first; k < bands[b].second; ++k) {
        sx += xp[f][k];
        sy += yp[f][k];
      }
      xe[b][f] = std::sqrt(sx);
      ye[b][f] = std::sqrt(sy);
    }

  const double clip = std::pow(10.0, -kBeta / 20.0);
  const double eps = detail::kStoiEps;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (std::size_t end = kSegment; end <= frames; ++end) {
    for (std::size_t b = 0; b < kBands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t s = 0; s < kSegment; ++s) {
        xs[s] = xe[b][end - kSegment + s];
        ys[s] = ye[b][end - kSegment + s];
        nx += xs[s] * xs[s];
        ny += ys[s] * ys[s];
      }
      const double scale = std::sqrt(nx) / (std::sqrt(ny) + eps);
      double mx = 0.0, my = 0.0;
      for (std::size_t s = 0; s < kSegment; ++s) {
        ys[s] = std::min(ys[s] * scale, xs[s] * (1.0 + clip));
        mx += xs[s];
        my += ys[s];
      }
      mx /= kSegment;
      my /= kSegment;
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (std::size_t s = 0; s < kSegment; ++s) {
        xs[s] -= mx;
        ys[s] -= my;
        vx += xs[s] * xs[s];
        vy += ys[s] * ys[s];
      }
      const double dx = std::sqrt(vx) + eps, dy = std::sqrt(vy) + eps;
      for (std::size_t s = 0; s < kSegment; ++s) cxy += (xs[s] / dx) * (ys[s] / dy);
      total += cxy;
      ++count;
    }
  }
  return total / double(count);
}

struct SeparationReport {
  std::vector<double> sdr_db;
  std::vector<double> stoi;  // clipped to [0, 1]
  Permutation perm;
  double mean_sdr_db = 0.0;
  double mean_stoi = 0.0;

  nlohmann::json to_json() const {
    return {{"sdr_db", sdr_db}, {"stoi", stoi}, {"perm", perm.to_string()},
            {"mean_sdr_db", mean_sdr_db}, {"mean_stoi", mean_stoi}};
  }
};

inline SeparationReport evaluate_separation(const std::vector<std::vector<double>>& estimates,
                                            const std::vector<std::vector<double>>& references,
                                            int sample_rate = kPipelineRate) {
  const SdrResult sdr = bss_eval_sdr(estimates, references);
  SeparationReport report;
  report.sdr_db = sdr.sdr_db;
  report.perm = sdr.perm;
  for (std::size_t j = 0; j < references.size(); ++j) {
    const double v = stoi(estimates[sdr.perm[j]], references[j], sample_rate);
    report.stoi.push_back(std::clamp(v, 0.0, 1.0));
  }
  const double n = double(references.size());
  report.mean_sdr_db = std::accumulate(report.sdr_db.begin(), report.sdr_db.end(), 0.0) / n;
  report.mean_stoi = std::accumulate(report.stoi.begin(), report.stoi.end(), 0.0) / n;
  return report;
}

}  // namespace binsep
