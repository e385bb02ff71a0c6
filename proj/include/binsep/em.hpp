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
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/error.hpp"
#include "binsep/interaural.hpp"
#include "binsep/stft.hpp"

namespace binsep {

struct EmConfig {
  std::size_t n_sources = 2;
  TauGrid tau_grid = TauGrid::standard();
  std::size_t iterations = 16;
  bool use_ild = false;
  bool use_garbage = false;
  double variance_floor = 1e-4;      // rad^2
  double ild_variance_floor = 1e-2;  // dB^2
  bool freq_dependent = true;
  double garbage_init = 0.1;
  double ild_range_db = 40.0;        // support of the uniform garbage ILD density
  double tolerance = 1e-6;           // relative log-likelihood gain for early exit
  double peak_ratio = 0.3;           // weaker PHAT peaks count only above this
  double min_peak_separation = 1.0;  // samples
  StftConfig stft;

  void validate() const {
    if (n_sources < 1) throw Error(ErrorKind::kContract, "need at least one source");
    if (tau_grid.size() == 0) throw Error(ErrorKind::kContract, "empty delay grid");
    if (iterations < 1) throw Error(ErrorKind::kContract, "iterations must be >= 1");
    if (!(variance_floor > 0.0) || !(ild_variance_floor > 0.0))
      throw Error(ErrorKind::kContract, "variance floors must be positive");
    if (use_garbage && !(garbage_init > 0.0 && garbage_init < 1.0))
      throw Error(ErrorKind::kContract, "garbage prior must lie in (0, 1)");
    if (!(ild_range_db > 0.0))
      throw Error(ErrorKind::kContract, "ILD range must be positive");
    stft.validate();
  }
};

// Parameters of the source x delay Gaussian mixture over phase residuals.
// Tensors are flattened: xi/sigma2 as [source][delay][bin], psi as
// [source][delay], ild_mu/ild_var as [source][bin].
struct IpdModelParams {
  std::size_t sources = 0;
  std::size_t delays = 0;
  std::size_t bins = 0;
  std::vector<double> xi;
  std::vector<double> sigma2;
  std::vector<double> psi;
  std::vector<double> ild_mu;
  std::vector<double> ild_var;
  double psi_garbage = 0.0;

  IpdModelParams() = default;
  IpdModelParams(std::size_t q, std::size_t t, std::size_t k, bool with_ild)
      : sources(q), delays(t), bins(k),
        xi(q * t * k, 0.0), sigma2(q * t * k, 1.0), psi(q * t, 0.0) {
    if (with_ild) {
      ild_mu.assign(q * k, 0.0);
      ild_var.assign(q * k, 100.0);
    }
  }

  std::size_t at(std::size_t i, std::size_t t, std::size_t k) const {
    return (i * delays + t) * bins + k;
  }
  double& mean(std::size_t i, std::size_t t, std::size_t k) { return xi[at(i, t, k)]; }
  double mean(std::size_t i, std::size_t t, std::size_t k) const { return xi[at(i, t, k)]; }
  double& variance(std::size_t i, std::size_t t, std::size_t k) { return sigma2[at(i, t, k)]; }
  double variance(std::size_t i, std::size_t t, std::size_t k) const { return sigma2[at(i, t, k)]; }
  double& weight(std::size_t i, std::size_t t) { return psi[i * delays + t]; }
  double weight(std::size_t i, std::size_t t) const { return psi[i * delays + t]; }

  bool has_ild() const { return !ild_mu.empty(); }

  double total_weight() const {
    double s = psi_garbage;
    for (double v : psi) s += v;
    return s;
  }

  void check_finite() const {
    auto bad = [](const std::vector<double>& v) {
      return std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); });
    };
    if (bad(xi) || bad(sigma2) || bad(psi) || bad(ild_mu) || bad(ild_var) ||
        !std::isfinite(psi_garbage))
      throw Error(ErrorKind::kNumeric, "EM model diverged: non-finite parameter");
  }
};

// Responsibilities nu_{i,tau}(k, m). Storage keeps the source/delay axis
// innermost so the per-TF-point normalization touches contiguous memory.
struct Posteriors {
  std::size_t sources = 0, delays = 0, bins = 0, frames = 0;
  std::vector<double> nu;          // [(k + m * bins) * components + i * delays + t]
  std::vector<double> nu_garbage;  // [k + m * bins], empty without garbage

  std::size_t components() const { return sources * delays; }
  bool has_garbage() const { return !nu_garbage.empty(); }

  double operator()(std::size_t i, std::size_t t, std::size_t k, std::size_t m) const {
    return nu[(k + m * bins) * components() + i * delays + t];
  }
  double garbage(std::size_t k, std::size_t m) const {
    return has_garbage() ? nu_garbage[k + m * bins] : 0.0;
  }

  // Sum over delays of one source's responsibilities.
  RealPlane source_mask(std::size_t i) const {
    RealPlane mask(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(frames));
    const std::size_t C = components();
    for (std::size_t m = 0; m < frames; ++m)
      for (std::size_t k = 0; k < bins; ++k) {
        const double* row = &nu[(k + m * bins) * C + i * delays];
        double s = 0.0;
        for (std::size_t t = 0; t < delays; ++t) s += row[t];
        mask(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = s;
      }
    return mask;
  }

  RealPlane garbage_mask() const {
    RealPlane mask = RealPlane::Zero(static_cast<Eigen::Index>(bins),
                                     static_cast<Eigen::Index>(frames));
    if (has_garbage())
      for (std::size_t p = 0; p < bins * frames; ++p) mask.data()[p] = nu_garbage[p];
    return mask;
  }
};

// Phase residuals for every grid delay, [(k + m * bins) * delays + t].
class ResidualCube {
 public:
  ResidualCube(const InterauralFeatures& f, const TauGrid& grid)
      : bins_(static_cast<std::size_t>(f.bins())),
        frames_(static_cast<std::size_t>(f.frames())),
        delays_(grid.size()),
        data_(bins_ * frames_ * delays_) {
    for (std::size_t m = 0; m < frames_; ++m)
      for (std::size_t k = 0; k < bins_; ++k) {
        const double ipd = f.ipd(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
        const double omega = f.omega(static_cast<Eigen::Index>(k));
        double* out = &data_[(k + m * bins_) * delays_];
        for (std::size_t t = 0; t < delays_; ++t)
          out[t] = wrap_phase(ipd - omega * grid[t]);
      }
  }

  std::size_t bins() const { return bins_; }
  std::size_t frames() const { return frames_; }
  std::size_t delays() const { return delays_; }
  const double* point(std::size_t k, std::size_t m) const {
    return &data_[(k + m * bins_) * delays_];
  }

 private:
  std::size_t bins_, frames_, delays_;
  std::vector<double> data_;
};

namespace detail {

inline constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)

inline void check_shapes(const InterauralFeatures& f, const IpdModelParams& p,
                         const EmConfig& cfg) {
  if (p.bins != static_cast<std::size_t>(f.bins()) || p.delays != cfg.tau_grid.size() ||
      p.sources != cfg.n_sources)
    throw Error(ErrorKind::kDimension, "EM parameters do not match features/config");
  if (cfg.use_ild && !p.has_ild())
    throw Error(ErrorKind::kContract, "ILD model requested but parameters lack it");
}

inline Posteriors e_step(const ResidualCube& cube, const InterauralFeatures& f,
                         const IpdModelParams& params, const EmConfig& cfg,
                         double* log_likelihood) {
  check_shapes(f, params, cfg);
  params.check_finite();
  const std::size_t Q = params.sources, T = params.delays, K = cube.bins(),
                    M = cube.frames(), C = Q * T;
  const bool ild = cfg.use_ild;

  // Per-bin Gaussian constants laid out [k][component].
  std::vector<double> offset(K * C), inv2var(K * C);
  for (std::size_t i = 0; i < Q; ++i)
    for (std::size_t t = 0; t < T; ++t) {
      const double log_psi = std::log(params.weight(i, t));
      for (std::size_t k = 0; k < K; ++k) {
        const double var = params.variance(i, t, k);
        offset[k * C + i * T + t] = log_psi - 0.5 * (kLogTwoPi + std::log(var));
        inv2var[k * C + i * T + t] = 0.5 / var;
      }
    }
  double log_garbage = -std::numeric_limits<double>::infinity();
  if (cfg.use_garbage) {
    log_garbage = std::log(params.psi_garbage) - kLogTwoPi;
    if (ild) log_garbage -= std::log(cfg.ild_range_db);
  }

  Posteriors post;
  post.sources = Q;
  post.delays = T;
  post.bins = K;
  post.frames = M;
  post.nu.resize(K * M * C);
  if (cfg.use_garbage) post.nu_garbage.resize(K * M);

  std::vector<double> ild_term(Q, 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t p = k + m * K;
      if (ild) {
        const double x = f.ild_db(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < Q; ++i) {
          const double mu = params.ild_mu[i * K + k], var = params.ild_var[i * K + k];
          const double d = x - mu;
          ild_term[i] = -0.5 * (kLogTwoPi + std::log(var)) - d * d / (2.0 * var);
        }
      }
      const double* res = cube.point(k, m);
      double* out = &post.nu[p * C];
      const double* off = &offset[k * C];
      const double* iv = &inv2var[k * C];
      double peak = log_garbage;
      for (std::size_t i = 0; i < Q; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t c = i * T + t;
          const double d = res[t] - params.xi[params.at(i, t, k)];
          const double v = off[c] - d * d * iv[c] + ild_term[i];
          out[c] = v;
          peak = std::max(peak, v);
        }
      }
      double sum = cfg.use_garbage ? std::exp(log_garbage - peak) : 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        out[c] = std::exp(out[c] - peak);
        sum += out[c];
      }
      const double inv = 1.0 / sum;
      for (std::size_t c = 0; c < C; ++c) out[c] *= inv;
      if (cfg.use_garbage) post.nu_garbage[p] = std::exp(log_garbage - peak) * inv;
      total += peak + std::log(sum);
    }
  }
  if (!std::isfinite(total))
    throw Error(ErrorKind::kNumeric, "EM model diverged: non-finite log-likelihood");
  if (log_likelihood != nullptr) *log_likelihood = total;
  return post;
}

}  // namespace detail

inline Posteriors e_step(const InterauralFeatures& features,
                         const IpdModelParams& params, const EmConfig& cfg) {
  ResidualCube cube(features, cfg.tau_grid);
  return detail::e_step(cube, features, params, cfg, nullptr);
}

// Sum over TF points of log sum_{i,tau} psi * N(residual | xi, sigma2)
// (times the ILD Gaussian when enabled), plus the garbage term.
inline double log_likelihood(const InterauralFeatures& features,
                             const IpdModelParams& params, const EmConfig& cfg) {
  ResidualCube cube(features, cfg.tau_grid);
  double ll = 0.0;
  detail::e_step(cube, features, params, cfg, &ll);
  return ll;
}

namespace detail {

inline IpdModelParams m_step(const ResidualCube& cube, const InterauralFeatures& f,
                             const Posteriors& post, const EmConfig& cfg,
                             const IpdModelParams& previous) {
  const std::size_t Q = post.sources, T = post.delays, K = post.bins, M = post.frames,
                    C = Q * T;
  if (K != cube.bins() || M != cube.frames() || T != cube.delays())
    throw Error(ErrorKind::kDimension, "posteriors do not match the features");
  if (previous.sources != Q || previous.delays != T || previous.bins != K)
    throw Error(ErrorKind::kDimension, "previous parameters do not match posteriors");
  constexpr double kTiny = 1e-300;
  const double n_points = double(K) * double(M);

  IpdModelParams next = previous;

  // Mixing weights.
  std::vector<double> mass(C, 0.0);
  for (std::size_t p = 0; p < K * M; ++p) {
    const double* nu = &post.nu[p * C];
    for (std::size_t c = 0; c < C; ++c) mass[c] += nu[c];
  }
  for (std::size_t c = 0; c < C; ++c) next.psi[c] = mass[c] / n_points;
  next.psi_garbage = 0.0;
  if (post.has_garbage()) {
    double g = 0.0;
    for (double v : post.nu_garbage) g += v;
    next.psi_garbage = g / n_points;
  }

  // IPD means and variances, per bin or pooled over bins.
  const std::size_t groups = cfg.freq_dependent ? K : 1;
  std::vector<double> w(groups * C, 0.0), s1(groups * C, 0.0), s2(groups * C, 0.0);
  auto group_of = [&](std::size_t k) { return cfg.freq_dependent ? k : 0; };
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      const double* nu = &post.nu[(k + m * K) * C];
      const double* res = cube.point(k, m);
      const std::size_t g = group_of(k) * C;
      for (std::size_t i = 0; i < Q; ++i)
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t c = i * T + t;
          w[g + c] += nu[c];
          s1[g + c] += nu[c] * res[t];
        }
    }
  std::vector<double> mean(groups * C, 0.0);
  for (std::size_t j = 0; j < groups * C; ++j) mean[j] = w[j] > kTiny ? s1[j] / w[j] : 0.0;
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      const double* nu = &post.nu[(k + m * K) * C];
      const double* res = cube.point(k, m);
      const std::size_t g = group_of(k) * C;
      for (std::size_t i = 0; i < Q; ++i)
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t c = i * T + t;
          const double d = res[t] - mean[g + c];
          s2[g + c] += nu[c] * d * d;
        }
    }
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t g = group_of(k) * C;
    for (std::size_t i = 0; i < Q; ++i)
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t c = i * T + t;
        if (!(w[g + c] > kTiny)) continue;  // no support: keep the old cell
        next.mean(i, t, k) = mean[g + c];
        next.variance(i, t, k) = std::max(s2[g + c] / w[g + c], cfg.variance_floor);
      }
  }

  // ILD Gaussians per source and bin, responsibilities summed over delays.
  if (cfg.use_ild) {
    if (!previous.has_ild())
      throw Error(ErrorKind::kContract, "ILD update requested without ILD parameters");
    std::vector<double> iw(Q * K, 0.0), is1(Q * K, 0.0), is2(Q * K, 0.0);
    std::vector<double> src(Q);
    auto source_weights = [&](std::size_t p) {
      const double* nu = &post.nu[p * C];
      for (std::size_t i = 0; i < Q; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += nu[i * T + t];
        src[i] = s;
      }
    };
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t k = 0; k < K; ++k) {
        source_weights(k + m * K);
        const double x = f.ild_db(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < Q; ++i) {
          iw[i * K + k] += src[i];
          is1[i * K + k] += src[i] * x;
        }
      }
    std::vector<double> imean(Q * K);
    for (std::size_t j = 0; j < Q * K; ++j) imean[j] = iw[j] > kTiny ? is1[j] / iw[j] : 0.0;
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t k = 0; k < K; ++k) {
        source_weights(k + m * K);
        const double x = f.ild_db(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < Q; ++i) {
          const double d = x - imean[i * K + k];
          is2[i * K + k] += src[i] * d * d;
        }
      }
    for (std::size_t j = 0; j < Q * K; ++j) {
      if (!(iw[j] > kTiny)) continue;
      next.ild_mu[j] = imean[j];
      next.ild_var[j] = std::max(is2[j] / iw[j], cfg.ild_variance_floor);
    }
  }
  return next;
}

}  // namespace detail

// Weighted maximum-likelihood update. `previous` supplies the values kept for
// cells that received no responsibility.
inline IpdModelParams m_step(const InterauralFeatures& features, const Posteriors& post,
                             const EmConfig& cfg, const IpdModelParams& previous) {
  ResidualCube cube(features, cfg.tau_grid);
  return detail::m_step(cube, features, post, cfg, previous);
}

struct PhatInit {
  IpdModelParams params;
  std::vector<double> delays;  // per-source initial delay, strongest first
  std::vector<double> gcc;     // GCC-PHAT evaluated on the delay grid
  bool fallback = false;       // fewer than Q distinguishable peaks were found
};

// GCC-PHAT over the whole mixture, evaluated at the (fractional) grid delays
// by summing the phase-transformed cross-spectrum as a band-limited series.
inline std::vector<double> gcc_phat(const StereoSpectrogram& spec, const TauGrid& grid) {
  const auto K = spec.left.bins(), M = spec.left.frames();
  if (spec.right.bins() != K || spec.right.frames() != M)
    throw Error(ErrorKind::kDimension, "left/right spectrograms differ in shape");
  std::vector<std::complex<double>> cross(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    std::complex<double> acc{};
    for (Eigen::Index m = 0; m < M; ++m) {
      const auto c = spec.left.values(k, m) * std::conj(spec.right.values(k, m));
      const double mag = std::abs(c);
      if (mag > kMagnitudeFloor) acc += c / mag;
    }
    cross[static_cast<std::size_t>(k)] = acc;
  }
  const double L = 2.0 * double(K - 1);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t t = 0; t < grid.size(); ++t) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double weight = (k == 0 || k == K - 1) ? 1.0 : 2.0;
      const double omega = 2.0 * std::numbers::pi * double(k) / L;
      s += weight * std::real(cross[static_cast<std::size_t>(k)] *
                              std::polar(1.0, -omega * grid[t]));
    }
    out[t] = s / L;
  }
  return out;
}

inline PhatInit phat_initialize(const StereoSpectrogram& spec, const EmConfig& cfg) {
  cfg.validate();
  const auto& grid = cfg.tau_grid;
  const std::size_t T = grid.size(), Q = cfg.n_sources;
  PhatInit init;
  init.gcc = gcc_phat(spec, grid);
  const auto& g = init.gcc;

  // Ordering: higher GCC first, then smaller |tau|, then lower index.
  auto stronger = [&](std::size_t a, std::size_t b) {
    if (g[a] != g[b]) return g[a] > g[b];
    if (std::abs(grid[a]) != std::abs(grid[b])) return std::abs(grid[a]) < std::abs(grid[b]);
    return a < b;
  };

  std::vector<std::size_t> peaks;
  const double top = *std::max_element(g.begin(), g.end());
  for (std::size_t t = 0; t < T; ++t) {
    const bool left_ok = t == 0 || g[t] >= g[t - 1];
    const bool right_ok = t + 1 == T || g[t] >= g[t + 1];
    if (left_ok && right_ok && g[t] > 0.0 && g[t] >= cfg.peak_ratio * top)
      peaks.push_back(t);
  }
  std::sort(peaks.begin(), peaks.end(), stronger);
  std::vector<std::size_t> chosen;
  for (std::size_t t : peaks) {
    if (chosen.size() == Q) break;
    const bool far = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      return std::abs(grid[c] - grid[t]) >= cfg.min_peak_separation;
    });
    if (far) chosen.push_back(t);
  }
  if (chosen.size() < Q) {
    init.fallback = true;
    warn("PHAT found fewer than " + std::to_string(Q) +
         " distinguishable delay peaks; using the largest grid values");
    std::vector<std::size_t> order(T);
    for (std::size_t t = 0; t < T; ++t) order[t] = t;
    std::sort(order.begin(), order.end(), stronger);
    chosen.assign(order.begin(), order.begin() + std::min(Q, T));
    while (chosen.size() < Q) chosen.push_back(chosen.back());
  }

  const std::size_t K = static_cast<std::size_t>(spec.left.bins());
  IpdModelParams params(Q, T, K, cfg.use_ild);
  params.psi_garbage = cfg.use_garbage ? cfg.garbage_init : 0.0;
  const double share = (1.0 - params.psi_garbage) / double(Q);
  for (std::size_t i = 0; i < Q; ++i) {
    const double centre = grid[chosen[i]];
    init.delays.push_back(centre);
    std::vector<double> bump(T);
    double norm = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double d = grid[t] - centre;
      bump[t] = std::exp(-0.5 * d * d);
      norm += bump[t];
    }
    for (std::size_t t = 0; t < T; ++t) params.weight(i, t) = share * bump[t] / norm;
  }
  init.params = std::move(params);
  return init;
}

inline PhatInit phat_initialize(const AudioClip& clip, const EmConfig& cfg) {
  return phat_initialize(stft_stereo(clip, cfg.stft), cfg);
}

struct EmResult {
  IpdModelParams params;
  Posteriors posteriors;
  std::vector<RealPlane> masks;  // one per real source
  std::optional<RealPlane> garbage_mask;
  std::vector<double> log_likelihoods;  // one per E-step
  PhatInit init;
  bool used_ild = false;
  bool used_garbage = false;

  // Responsibility-weighted mean delay of each source, in samples.
  std::vector<double> tau_centroids(const TauGrid& grid) const {
    const auto& p = posteriors;
    std::vector<double> num(p.sources, 0.0), den(p.sources, 0.0);
    const std::size_t C = p.components();
    for (std::size_t q = 0; q < p.bins * p.frames; ++q) {
      const double* nu = &p.nu[q * C];
      for (std::size_t i = 0; i < p.sources; ++i)
        for (std::size_t t = 0; t < p.delays; ++t) {
          num[i] += grid[t] * nu[i * p.delays + t];
          den[i] += nu[i * p.delays + t];
        }
    }
    std::vector<double> out(p.sources);
    for (std::size_t i = 0; i < p.sources; ++i) out[i] = den[i] > 0 ? num[i] / den[i] : 0.0;
    return out;
  }
};

namespace detail {
inline void dump_iteration(std::ostream& os, std::size_t iteration, double ll,
                           const IpdModelParams& params, const TauGrid& grid) {
  if (iteration == 1) {
    os << "iteration\tlog_likelihood\tpsi_garbage";
    for (std::size_t i = 0; i < params.sources; ++i)
      for (std::size_t t = 0; t < params.delays; ++t)
        os << "\tpsi_" << i << '_' << grid[t];
    os << '\n';
  }
  os << iteration << '\t' << std::setprecision(17) << ll << '\t' << params.psi_garbage;
  for (double v : params.psi) os << '\t' << v;
  os << '\n';
}
}  // namespace detail

// PHAT initialization followed by alternating E and M steps. `iterations`
// counts E-steps; the masks come from the last one. Stops early once the
// relative log-likelihood gain drops below cfg.tolerance.
inline EmResult run_em(const StereoSpectrogram& spec, const EmConfig& cfg,
                       std::ostream* diagnostics = nullptr) {
  cfg.validate();
  const InterauralFeatures features = interaural_features(spec);
  const ResidualCube cube(features, cfg.tau_grid);

  EmResult result;
  result.init = phat_initialize(spec, cfg);
  result.used_ild = cfg.use_ild;
  result.used_garbage = cfg.use_garbage;
  IpdModelParams params = result.init.params;

  for (std::size_t it = 1;; ++it) {
    double ll = 0.0;
    result.posteriors = detail::e_step(cube, features, params, cfg, &ll);
    result.log_likelihoods.push_back(ll);
    if (diagnostics != nullptr)
      detail::dump_iteration(*diagnostics, it, ll, params, cfg.tau_grid);
    if (it >= 2) {
      const double prev = result.log_likelihoods[it - 2];
      if ((ll - prev) / std::abs(prev) < cfg.tolerance) break;
    }
    if (it >= cfg.iterations) break;
    params = detail::m_step(cube, features, result.posteriors, cfg, params);
  }
  result.params = std::move(params);
  for (std::size_t i = 0; i < cfg.n_sources; ++i)
    result.masks.push_back(result.posteriors.source_mask(i));
  if (cfg.use_garbage) result.garbage_mask = result.posteriors.garbage_mask();
  return result;
}

inline EmResult run_em(const AudioClip& clip, const EmConfig& cfg,
                       std::ostream* diagnostics = nullptr) {
  return run_em(stft_stereo(clip, cfg.stft), cfg, diagnostics);
}

}  // namespace binsep
