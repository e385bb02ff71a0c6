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
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/em.hpp"
#include "binsep/error.hpp"
#include "binsep/interaural.hpp"
#include "binsep/stft.hpp"

namespace binsep {

// Per-source time-frequency weights in [0, 1], bins x frames.
struct SoftMask {
  RealPlane values;
  std::string source_id;

  Eigen::Index bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
};

inline std::vector<SoftMask> to_soft_masks(const std::vector<RealPlane>& planes,
                                           std::string_view prefix = "source") {
  std::vector<SoftMask> out;
  for (std::size_t i = 0; i < planes.size(); ++i)
    out.push_back({planes[i], std::string(prefix) + std::to_string(i + 1)});
  return out;
}

// Mask exchange file, little-endian:
//   "BSMK" | u16 version | u16 n_sources | u32 K | u32 M |
//   n_sources planes of K*M float32, row-major (bin-major).
inline constexpr char kMaskMagic[4] = {'B', 'S', 'M', 'K'};
inline constexpr std::uint16_t kMaskVersion = 1;
inline constexpr std::size_t kMaskHeaderBytes = 16;
inline constexpr double kMaskRangeSlack = 1e-6;

namespace detail {

// Checks [0, 1] with slack; values inside the slack are clamped. Returns how
// many entries were clamped.
inline std::size_t clamp_unit_range(RealPlane& plane, const std::string& where) {
  std::size_t clamped = 0;
  for (Eigen::Index i = 0; i < plane.size(); ++i) {
    double& v = plane.data()[i];
    if (!std::isfinite(v))
      throw Error(ErrorKind::kContract, where + ": non-finite mask value");
    if (v < 0.0 || v > 1.0) {
      if (v < -kMaskRangeSlack || v > 1.0 + kMaskRangeSlack)
        throw Error(ErrorKind::kFormat, where + ": mask value " + std::to_string(v) +
                                            " outside [0, 1]");
      v = std::clamp(v, 0.0, 1.0);
      ++clamped;
    }
  }
  return clamped;
}

}  // namespace detail

inline void write_mask_file(const std::vector<SoftMask>& masks,
                            const std::filesystem::path& path) {
  if (masks.empty()) throw Error(ErrorKind::kContract, "no masks to write");
  const auto K = masks.front().bins(), M = masks.front().frames();
  for (const auto& m : masks)
    if (m.bins() != K || m.frames() != M)
      throw Error(ErrorKind::kDimension, "masks differ in shape");

  std::vector<unsigned char> out;
  out.reserve(kMaskHeaderBytes + masks.size() * K * M * 4);
  out.insert(out.end(), kMaskMagic, kMaskMagic + 4);
  detail::put16(out, kMaskVersion);
  detail::put16(out, static_cast<std::uint16_t>(masks.size()));
  detail::put32(out, static_cast<std::uint32_t>(K));
  detail::put32(out, static_cast<std::uint32_t>(M));
  for (const auto& mask : masks) {
    RealPlane plane = mask.values;
    if (detail::clamp_unit_range(plane, path.string()) > 0)
      warn(path.string() + ": clamped mask values within slack");
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index m = 0; m < M; ++m)
        detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(plane(k, m))));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

// Reads and validates a mask file without any shape expectations.
inline std::vector<SoftMask> read_mask_file(const std::filesystem::path& path) {
  const auto bytes = detail::slurp(path);
  const std::string where = path.string();
  if (bytes.size() < kMaskHeaderBytes)
    throw Error(ErrorKind::kFormat, where + ": truncated mask header");
  if (std::memcmp(bytes.data(), kMaskMagic, 4) != 0)
    throw Error(ErrorKind::kFormat, where + ": bad magic (expected BSMK)");
  const std::uint16_t version = detail::le16(bytes.data() + 4);
  if (version != kMaskVersion)
    throw Error(ErrorKind::kFormat, where + ": unsupported version " + std::to_string(version));
  const std::size_t n = detail::le16(bytes.data() + 6);
  const std::size_t K = detail::le32(bytes.data() + 8);
  const std::size_t M = detail::le32(bytes.data() + 12);
  if (n == 0 || K == 0 || M == 0)
    throw Error(ErrorKind::kFormat, where + ": empty mask dimensions");
  if (bytes.size() - kMaskHeaderBytes != n * K * M * 4)
    throw Error(ErrorKind::kFormat, where + ": payload length does not match header");

  std::vector<SoftMask> out;
  std::size_t clamped = 0;
  const unsigned char* p = bytes.data() + kMaskHeaderBytes;
  for (std::size_t s = 0; s < n; ++s) {
    SoftMask mask{RealPlane(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(M)),
                  "source" + std::to_string(s + 1)};
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t m = 0; m < M; ++m, p += 4)
        mask.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) =
            std::bit_cast<float>(detail::le32(p));
    clamped += detail::clamp_unit_range(mask.values, where);
    out.push_back(std::move(mask));
  }
  if (clamped > 0)
    warn(where + ": clamped " + std::to_string(clamped) + " mask values within slack");
  return out;
}

inline std::string shape_string(std::size_t K, std::size_t M) {
  return std::to_string(K) + "x" + std::to_string(M);
}

// Loads masks for a live mixture of K bins x M frames. Files with extra
// frames (padding added by the producer) are truncated; files storing all L
// rows of an L-point transform are cut to the one-sided K rows.
inline std::vector<SoftMask> load_mask_file(const std::filesystem::path& path,
                                            std::size_t expected_bins,
                                            std::size_t expected_frames) {
  auto masks = read_mask_file(path);
  const auto K = static_cast<std::size_t>(masks.front().bins());
  const auto M = static_cast<std::size_t>(masks.front().frames());
  const bool two_sided = K == 2 * (expected_bins - 1);
  if ((K != expected_bins && !two_sided) || M < expected_frames)
    throw Error(ErrorKind::kDimension,
                path.string() + ": mask shape " + shape_string(K, M) +
                    " does not cover mixture shape " +
                    shape_string(expected_bins, expected_frames));
  if (M > expected_frames)
    warn(path.string() + ": truncating " + std::to_string(M - expected_frames) +
         " padded frame(s)");
  for (auto& mask : masks) {
    RealPlane cut = mask.values.topLeftCorner(static_cast<Eigen::Index>(expected_bins),
                                              static_cast<Eigen::Index>(expected_frames));
    mask.values = std::move(cut);
  }
  return masks;
}

// ILD masks from a joint ILD/IPD EM run: per-source posterior summed over
// delays.
inline std::vector<SoftMask> ild_masks_from_em(const EmResult& em) {
  if (!em.used_ild)
    throw Error(ErrorKind::kContract, "EM ILD masks need a run with the ILD model enabled");
  return to_soft_masks(em.masks);
}

// Checks mask_1 + mask_2 + ... <= 1 (+ slack) at every TF point.
inline void check_complementary(const std::vector<SoftMask>& masks, const std::string& where) {
  if (masks.empty()) return;
  RealPlane sum = RealPlane::Zero(masks.front().bins(), masks.front().frames());
  for (const auto& m : masks) sum += m.values;
  if (sum.maxCoeff() > 1.0 + kMaskRangeSlack)
    throw Error(ErrorKind::kFormat, where + ": masks sum above 1 (max " +
                                        std::to_string(sum.maxCoeff()) + ")");
}

// Where ILD soft masks come from: the joint EM model or an external file.
struct IldProvider {
  enum class Kind { kEm, kFile };
  Kind kind = Kind::kEm;
  std::string path;

  static IldProvider parse(std::string_view text) {
    if (text == "em") return {};
    if (text.starts_with("file:") && text.size() > 5)
      return {Kind::kFile, std::string(text.substr(5))};
    throw Error(ErrorKind::kUsage,
                "unknown ILD provider '" + std::string(text) + "' (use em or file:<path>)");
  }

  std::string to_string() const { return kind == Kind::kEm ? "em" : "file:" + path; }
};

// Grayscale ILD image for the exchange format: (ild_db + 40) / 80, clamped to
// [0, 1].
inline RealPlane ild_image(const InterauralFeatures& features) {
  return ((features.ild_db + 40.0) / 80.0).min(1.0).max(0.0);
}

// One-hot labels: each TF point goes to the source with the largest
// magnitude, lowest index on ties.
inline std::vector<RealPlane> ideal_binary_labels(const std::vector<RealPlane>& magnitudes) {
  if (magnitudes.empty()) throw Error(ErrorKind::kContract, "no sources");
  const auto K = magnitudes.front().rows(), M = magnitudes.front().cols();
  std::vector<RealPlane> labels(magnitudes.size(), RealPlane::Zero(K, M));
  for (Eigen::Index m = 0; m < M; ++m)
    for (Eigen::Index k = 0; k < K; ++k) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < magnitudes.size(); ++s)
        if (magnitudes[s](k, m) > magnitudes[best](k, m)) best = s;
      labels[best](k, m) = 1.0;
    }
  return labels;
}

struct TrainingPairFiles {
  std::filesystem::path ild;     // one plane: ILD image of the mixture
  std::filesystem::path labels;  // one-hot plane per source
};

// Writes the mixture ILD image and ideal-binary-mask labels for one training
// example. Sources may be mono or stereo (stereo magnitudes are summed over
// ears) and must match the mixture length.
inline TrainingPairFiles export_training_pairs(const AudioClip& mixture,
                                               const std::vector<AudioClip>& sources,
                                               const std::filesystem::path& out_dir,
                                               const std::string& stem,
                                               const StftConfig& cfg = {}) {
  require_stereo(mixture, "export_training_pairs");
  require_pipeline_rate(mixture, "export_training_pairs");
  if (sources.size() < 2) throw Error(ErrorKind::kContract, "need at least two sources");
  for (const auto& s : sources) {
    s.validate();
    if (s.num_frames() != mixture.num_frames())
      throw Error(ErrorKind::kDimension,
                  "source length " + std::to_string(s.num_frames()) +
                      " does not match mixture length " +
                      std::to_string(mixture.num_frames()));
  }
  const auto spec = stft_stereo(mixture, cfg);
  const auto features = interaural_features(spec);
  std::vector<RealPlane> mags;
  for (const auto& s : sources) {
    RealPlane mag = RealPlane::Zero(spec.left.bins(), spec.left.frames());
    for (const auto& ch : s.channels) mag += stft(ch, cfg).values.abs();
    mags.push_back(std::move(mag));
  }
  std::filesystem::create_directories(out_dir);
  TrainingPairFiles files{out_dir / (stem + "_ild.bsmk"), out_dir / (stem + "_ibm.bsmk")};
  write_mask_file({{ild_image(features), "ild"}}, files.ild);
  write_mask_file(to_soft_masks(ideal_binary_labels(mags)), files.labels);
  return files;
}

}  // namespace binsep
