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
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "binsep/error.hpp"
#include "binsep/mask.hpp"
#include "binsep/metrics.hpp"
#include "binsep/stft.hpp"

namespace binsep {

enum class MaskType { kProduct, kSubband, kWeightedSubband };

inline MaskType parse_mask_type(std::string_view s) {
  if (s == "product") return MaskType::kProduct;
  if (s == "subband") return MaskType::kSubband;
  if (s == "weighted_subband") return MaskType::kWeightedSubband;
  throw Error(ErrorKind::kUsage, "unknown mask type '" + std::string(s) + "'");
}

inline std::string to_string(MaskType t) {
  switch (t) {
    case MaskType::kProduct: return "product";
    case MaskType::kSubband: return "subband";
    case MaskType::kWeightedSubband: return "weighted_subband";
  }
  return "?";
}

struct FusionConfig {
  MaskType type = MaskType::kSubband;
  double split_edge_hz = 500.0;  // only used by the weighted variant
  double low_edge_hz = 1500.0;
  double high_edge_hz = 4000.0;
  std::array<double, 4> betas{1.0, 1.0, 1.0, 1.0};
  int sample_rate = kPipelineRate;
  std::size_t frame_length = 1024;

  void validate() const {
    const double nyquist = sample_rate / 2.0;
    if (!(0.0 < split_edge_hz && split_edge_hz < low_edge_hz && low_edge_hz < high_edge_hz &&
          high_edge_hz < nyquist))
      throw Error(ErrorKind::kContract, "band edges must satisfy 0 < 500 < b1 < b2 < fs/2");
    for (double b : betas)
      if (!(b > 0.0)) throw Error(ErrorKind::kContract, "band weights must be positive");
  }

  std::size_t edge_bin(double hz) const {
    return static_cast<std::size_t>(std::llround(hz * double(frame_length) / sample_rate));
  }
};

// Band segment of each bin: 0 below the 500 Hz split, 1 up to the low edge
// (both IPD only), 2 up to the high edge (ILD x IPD), 3 above (ILD only). An
// edge bin belongs to the band above it.
inline std::vector<int> band_segments(std::size_t bins, const FusionConfig& cfg) {
  const std::size_t s = cfg.edge_bin(cfg.split_edge_hz), b1 = cfg.edge_bin(cfg.low_edge_hz),
                    b2 = cfg.edge_bin(cfg.high_edge_hz);
  std::vector<int> seg(bins);
  for (std::size_t k = 0; k < bins; ++k) seg[k] = k < s ? 0 : k < b1 ? 1 : k < b2 ? 2 : 3;
  return seg;
}

inline std::vector<SoftMask> fuse(const std::vector<SoftMask>& ild,
                                  const std::vector<SoftMask>& ipd, const FusionConfig& cfg) {
  cfg.validate();
  if (ild.size() != ipd.size() || ild.empty())
    throw Error(ErrorKind::kDimension, "ILD and IPD mask counts differ");
  std::vector<SoftMask> out;
  for (std::size_t i = 0; i < ild.size(); ++i) {
    const auto& a = ild[i].values;
    const auto& b = ipd[i].values;
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw Error(ErrorKind::kDimension, "ILD and IPD masks differ in shape");
    RealPlane fused(a.rows(), a.cols());
    if (cfg.type == MaskType::kProduct) {
      fused = a * b;
    } else {
      const auto seg = band_segments(static_cast<std::size_t>(a.rows()), cfg);
      const bool weighted = cfg.type == MaskType::kWeightedSubband;
      for (Eigen::Index k = 0; k < a.rows(); ++k) {
        const int s = seg[static_cast<std::size_t>(k)];
        const double beta = weighted ? cfg.betas[static_cast<std::size_t>(s)] : 1.0;
        switch (s) {
          case 0:
          case 1: fused.row(k) = beta * b.row(k); break;
          case 2: fused.row(k) = beta * a.row(k) * b.row(k); break;
          default: fused.row(k) = beta * a.row(k); break;
        }
      }
    }
    out.push_back({fused.min(1.0).max(0.0), ild[i].source_id});
  }
  return out;
}

// aligned[j] = masks[perm[j]].
inline std::vector<SoftMask> apply_permutation(const std::vector<SoftMask>& masks,
                                               const Permutation& perm) {
  if (perm.size() != masks.size() || !perm.is_valid())
    throw Error(ErrorKind::kContract, "invalid permutation for mask set");
  std::vector<SoftMask> out;
  for (std::size_t j = 0; j < perm.size(); ++j) out.push_back(masks[perm[j]]);
  return out;
}

// Masks both ear spectrograms, sums them, and inverts to a mono signal.
inline std::vector<double> apply_and_resynthesize(const SoftMask& mask,
                                                  const StereoSpectrogram& mixture,
                                                  const StftConfig& cfg, std::size_t out_len) {
  if (mask.bins() != mixture.left.bins() || mask.frames() != mixture.left.frames() ||
      mixture.right.bins() != mixture.left.bins() ||
      mixture.right.frames() != mixture.left.frames())
    throw Error(ErrorKind::kDimension,
                "mask shape " + shape_string(mask.bins(), mask.frames()) +
                    " does not match mixture shape " +
                    shape_string(mixture.left.bins(), mixture.left.frames()));
  Spectrogram sum;
  sum.bin_hz = mixture.left.bin_hz;
  sum.values = mask.values * (mixture.left.values + mixture.right.values);
  return istft(sum, cfg, out_len);
}

struct Alignment {
  Permutation perm;
  bool low_confidence = false;
};

// Orders masks against known references: each mask is applied to the
// mixture and the SDR permutation search picks the ordering.
inline Alignment align_permutation_oracle(const std::vector<SoftMask>& masks,
                                          const StereoSpectrogram& mixture,
                                          const std::vector<std::vector<double>>& references,
                                          const StftConfig& cfg) {
  if (references.size() != masks.size())
    throw Error(ErrorKind::kContract, "need one reference per mask");
  for (const auto& r : references)
    if (r.size() != mixture.length)
      throw Error(ErrorKind::kDimension,
                  "reference length " + std::to_string(r.size()) +
                      " does not match mixture length " + std::to_string(mixture.length));
  std::vector<std::vector<double>> estimates;
  for (const auto& m : masks)
    estimates.push_back(apply_and_resynthesize(m, mixture, cfg, mixture.length));
  const SdrResult sdr = bss_eval_sdr(estimates, references);
  return {sdr.perm, sdr.ambiguous};
}

// Reference-free ordering: the IPD permutation that best overlaps the ILD
// masks (sum of element-wise inner products). Ties resolve to identity.
inline Permutation align_permutation_blind(const std::vector<SoftMask>& ipd,
                                           const std::vector<SoftMask>& ild) {
  if (ipd.size() != ild.size() || ipd.empty())
    throw Error(ErrorKind::kDimension, "ILD and IPD mask counts differ");
  Permutation candidate = Permutation::identity(ipd.size()), best = candidate;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (std::size_t j = 0; j < ild.size(); ++j) {
      if (ild[j].values.rows() != ipd[candidate[j]].values.rows() ||
          ild[j].values.cols() != ipd[candidate[j]].values.cols())
        throw Error(ErrorKind::kDimension, "ILD and IPD masks differ in shape");
      score += (ild[j].values * ipd[candidate[j]].values).sum();
    }
    if (score > best_score * (1.0 + 1e-12) + 1e-300) {
      best_score = score;
      best = candidate;
    }
  } while (std::next_permutation(candidate.order.begin(), candidate.order.end()));
  return best;
}

}  // namespace binsep
