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

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "binsep/error.hpp"

namespace binsep {

// Real-input FFT of a fixed size backed by FFTW. Plans are made once per size
// and reused through real_fft(); execution uses private aligned buffers, so
// callers may pass any span.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    if (n == 0) throw Error(ErrorKind::kContract, "FFT size must be positive");
    time_ = fftw_alloc_real(n);
    freq_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), time_, freq_,
                                    FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), freq_, time_,
                                    FFTW_ESTIMATE);
  }

  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(time_);
    fftw_free(freq_);
  }

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // Input shorter than size() is zero-padded.
  void forward(std::span<const double> in,
               std::span<std::complex<double>> out) {
    std::size_t count = std::min(in.size(), n_);
    std::copy_n(in.begin(), count, time_);
    std::fill(time_ + count, time_ + n_, 0.0);
    fftw_execute(forward_);
    auto* bins_ptr = reinterpret_cast<std::complex<double>*>(freq_);
    std::copy_n(bins_ptr, std::min(out.size(), bins()), out.begin());
  }

  // Unnormalized inverse: forward followed by inverse scales by size().
  void inverse(std::span<const std::complex<double>> in,
               std::span<double> out) {
    auto* bins_ptr = reinterpret_cast<std::complex<double>*>(freq_);
    std::size_t count = std::min(in.size(), bins());
    std::copy_n(in.begin(), count, bins_ptr);
    std::fill(bins_ptr + count, bins_ptr + bins(), std::complex<double>{});
    fftw_execute(inverse_);
    std::copy_n(time_, std::min(out.size(), n_), out.begin());
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  double* time_ = nullptr;
  fftw_complex* freq_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

inline RealFft& real_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Full linear convolution. Short kernels use the direct sum so that impulse
// responses made of exact deltas reproduce their input bit for bit.
inline std::vector<double> convolve(std::span<const double> a,
                                    std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::size_t out_len = a.size() + b.size() - 1;
  std::vector<double> out(out_len, 0.0);
  if (std::min(a.size(), b.size()) <= 64) {
    auto small = a.size() <= b.size() ? a : b;
    auto large = a.size() <= b.size() ? b : a;
    for (std::size_t j = 0; j < small.size(); ++j) {
      double h = small[j];
      if (h == 0.0) continue;
      for (std::size_t i = 0; i < large.size(); ++i) out[i + j] += h * large[i];
    }
    return out;
  }
  std::size_t n = next_pow2(out_len);
  auto& fft = real_fft(n);
  std::vector<std::complex<double>> fa(fft.bins()), fb(fft.bins());
  fft.forward(a, fa);
  fft.forward(b, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k] / double(n);
  std::vector<double> full(n);
  fft.inverse(fa, full);
  std::copy_n(full.begin(), out_len, out.begin());
  return out;
}

// Cross-correlation r[d] = sum_t x[t] * y[t - d] for lags d = 0..max_lag-1.
inline std::vector<double> cross_correlation(std::span<const double> x,
                                             std::span<const double> y,
                                             std::size_t max_lag) {
  std::size_t n = next_pow2(std::max(x.size(), y.size()) + max_lag);
  auto& fft = real_fft(n);
  std::vector<std::complex<double>> fx(fft.bins()), fy(fft.bins());
  fft.forward(x, fx);
  fft.forward(y, fy);
  for (std::size_t k = 0; k < fx.size(); ++k)
    fx[k] *= std::conj(fy[k]) / double(n);
  std::vector<double> full(n);
  fft.inverse(fx, full);
  full.resize(max_lag);
  return full;
}

}  // namespace binsep
