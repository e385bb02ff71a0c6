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

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/em.hpp"
#include "binsep/error.hpp"
#include "binsep/fusion.hpp"
#include "binsep/mask.hpp"
#include "binsep/metrics.hpp"
#include "binsep/stft.hpp"

namespace binsep {

struct SeparationConfig {
  EmConfig em;  // use_ild is ignored: IPD masks come from a run without ILD
  FusionConfig fusion;
  IldProvider ild_provider;
};

struct SeparationOutput {
  std::vector<std::vector<double>> sources;  // mono, one per source, aligned
  std::vector<SoftMask> ipd_masks;           // aligned
  std::vector<SoftMask> ild_masks;           // aligned
  std::vector<SoftMask> fused_masks;
  Permutation ipd_perm;  // aligned ipd[j] = raw ipd[ipd_perm[j]]
  bool low_confidence = false;
  double psi_garbage = 0.0;  // garbage weight of the IPD model
};

// One stereo mixture plus memoized EM runs, so several fusion variants can
// share the expensive clustering.
class SeparationSession {
 public:
  explicit SeparationSession(AudioClip mixture, const StftConfig& stft = {})
      : mixture_(std::move(mixture)), stft_(stft) {
    require_stereo(mixture_, "separation input");
    require_pipeline_rate(mixture_, "separation input");
    spec_ = stft_stereo(mixture_, stft_);
  }

  const AudioClip& mixture() const { return mixture_; }
  const StereoSpectrogram& spectrogram() const { return spec_; }
  const StftConfig& stft_config() const { return stft_; }

  const EmResult& em(EmConfig cfg) {
    cfg.stft = stft_;
    const std::string k = key(cfg);
    auto it = cache_.find(k);
    if (it == cache_.end()) it = cache_.emplace(k, run_em(spec_, cfg)).first;
    return it->second;
  }

  std::vector<SoftMask> ild_masks(const IldProvider& provider, EmConfig cfg) {
    if (provider.kind == IldProvider::Kind::kFile) {
      auto masks = load_mask_file(provider.path, static_cast<std::size_t>(spec_.left.bins()),
                                  static_cast<std::size_t>(spec_.left.frames()));
      if (masks.size() != cfg.n_sources)
        throw Error(ErrorKind::kDimension,
                    provider.path + ": holds " + std::to_string(masks.size()) +
                        " masks, expected " + std::to_string(cfg.n_sources));
      check_complementary(masks, provider.path);
      return masks;
    }
    cfg.use_ild = true;
    return ild_masks_from_em(em(cfg));
  }

  // IPD clustering, ILD masks from the provider, alignment, fusion and
  // resynthesis. With references, masks are ordered to match them (file
  // masks are taken to be in reference order already); without, IPD masks
  // are ordered to agree with the ILD masks.
  SeparationOutput separate(const SeparationConfig& cfg,
                            const std::vector<std::vector<double>>* references = nullptr) {
    EmConfig ipd_cfg = cfg.em;
    ipd_cfg.use_ild = false;
    const EmResult& ipd_em = em(ipd_cfg);
    std::vector<SoftMask> ipd = to_soft_masks(ipd_em.masks, "ipd");
    std::vector<SoftMask> ild = ild_masks(cfg.ild_provider, cfg.em);

    SeparationOutput out;
    out.psi_garbage = ipd_em.params.psi_garbage;
    if (references != nullptr) {
      const Alignment a = align_permutation_oracle(ipd, spec_, *references, stft_);
      out.ipd_perm = a.perm;
      out.low_confidence = a.low_confidence;
      if (cfg.ild_provider.kind == IldProvider::Kind::kEm)
        ild = apply_permutation(ild, align_permutation_oracle(ild, spec_, *references, stft_).perm);
    } else {
      out.ipd_perm = align_permutation_blind(ipd, ild);
    }
    out.ipd_masks = apply_permutation(ipd, out.ipd_perm);
    out.ild_masks = std::move(ild);

    FusionConfig fusion = cfg.fusion;
    fusion.sample_rate = stft_.sample_rate;
    fusion.frame_length = stft_.frame_length;
    out.fused_masks = fuse(out.ild_masks, out.ipd_masks, fusion);
    for (const auto& m : out.fused_masks)
      out.sources.push_back(apply_and_resynthesize(m, spec_, stft_, mixture_.num_frames()));
    return out;
  }

 private:
  static std::string key(const EmConfig& c) {
    std::ostringstream os;
    os << std::setprecision(17) << c.n_sources << '|' << c.iterations << '|' << c.use_ild
       << c.use_garbage << c.freq_dependent << '|' << c.variance_floor << '|'
       << c.ild_variance_floor << '|' << c.garbage_init << '|' << c.ild_range_db << '|'
       << c.tolerance << '|' << c.peak_ratio << '|' << c.min_peak_separation;
    for (double t : c.tau_grid.values) os << ',' << t;
    return os.str();
  }

  AudioClip mixture_;
  StftConfig stft_;
  StereoSpectrogram spec_;
  std::map<std::string, EmResult> cache_;
};

inline SeparationOutput separate(const AudioClip& mixture, const SeparationConfig& cfg,
                                 const std::vector<std::vector<double>>* references = nullptr) {
  SeparationSession session(mixture, cfg.em.stft);
  return session.separate(cfg, references);
}

}  // namespace binsep
