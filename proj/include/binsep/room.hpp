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

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "binsep/audio.hpp"
#include "binsep/error.hpp"
#include "binsep/fft.hpp"

namespace binsep {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

struct RoomSpec {
  std::string name;
  double rt60_ms = 0.0;
  double source_mic_distance_m = 1.5;
  std::array<double, 3> dims_m{0.0, 0.0, 0.0};
  std::optional<double> drr_db;

  void validate() const {
    if (!(rt60_ms >= 0.0)) throw Error(ErrorKind::kContract, "RT60 must be >= 0");
    if (!(source_mic_distance_m > 0.0))
      throw Error(ErrorKind::kContract, "source distance must be positive");
  }
};

// The five measured rooms the synthetic generator stands in for.
inline const std::vector<RoomSpec>& standard_rooms() {
  static const std::vector<RoomSpec> rooms = {
      {"X", 0.0, 1.5, {17.04, 14.53, 6.5}, std::nullopt},
      {"A", 320.0, 1.5, {6.6, 5.7, 2.3}, 6.09},
      {"B", 470.0, 1.5, {4.6, 4.6, 2.6}, 5.31},
      {"C", 680.0, 1.5, {18.8, 23.5, 4.6}, 8.82},
      {"D", 890.0, 1.5, {8.7, 8.0, 4.25}, 6.12},
  };
  return rooms;
}

inline const RoomSpec& room_by_name(const std::string& name) {
  for (const auto& r : standard_rooms())
    if (r.name == name) return r;
  throw Error(ErrorKind::kContract, "unknown room '" + name + "'");
}

struct SourceGeometry {
  double azimuth_deg = 0.0;
  double mic_spacing_m = 0.175;

  // Plane-wave delay of the right microphone behind the left, in samples.
  double interaural_delay(int sample_rate = kPipelineRate) const {
    return mic_spacing_m / kSpeedOfSound *
           std::sin(azimuth_deg * std::numbers::pi / 180.0) * sample_rate;
  }

  // Head-shadow proxy: left-over-right level difference in dB.
  double level_difference_db() const {
    return 6.0 * std::sin(azimuth_deg * std::numbers::pi / 180.0);
  }
};

// Adds a 32-tap Hann-windowed sinc impulse of height `gain` at fractional
// position `pos`. Integer positions produce a single exact sample.
inline void add_fractional_impulse(std::vector<double>& h, double pos, double gain) {
  constexpr int kHalf = 16;
  const auto base = static_cast<long long>(std::floor(pos));
  for (long long n = base - (kHalf - 1); n <= base + kHalf; ++n) {
    if (n < 0 || n >= static_cast<long long>(h.size())) continue;
    const double x = double(n) - pos;
    if (std::abs(x) >= kHalf) continue;
    if (x == std::round(x) && x != 0.0) continue;  // sinc zero crossing
    const double sinc =
        x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * x / kHalf));
    h[static_cast<std::size_t>(n)] += gain * sinc * w;
  }
}

// Bulk delay ahead of every direct path, so negative interaural delays and the
// interpolation kernel stay causal.
inline constexpr double kDirectPathOffset = 24.0;

// Anechoic binaural pair: left impulse at the bulk offset, right impulse
// `delay` samples later, left/right level difference `level_db`.
inline AudioClip direct_path_rir(double delay, double level_db,
                                 int sample_rate = kPipelineRate) {
  const auto len = static_cast<std::size_t>(kDirectPathOffset + std::abs(delay)) + 24;
  std::vector<double> left(len, 0.0), right(len, 0.0);
  add_fractional_impulse(left, kDirectPathOffset, std::pow(10.0, level_db / 40.0));
  add_fractional_impulse(right, kDirectPathOffset + delay, std::pow(10.0, -level_db / 40.0));
  return AudioClip::stereo(std::move(left), std::move(right), sample_rate);
}

inline constexpr double kDefaultDrrDb = 6.0;

// Direct path plus an exponentially decaying Gaussian-noise tail per ear. The
// tail decays 60 dB over rt60 and runs for 4/3 * rt60; its level is set so
// the direct-to-reverberant ratio matches the room.
inline AudioClip synth_rir(const RoomSpec& room, const SourceGeometry& geom,
                           std::uint64_t seed, int sample_rate = kPipelineRate) {
  room.validate();
  const double delay = geom.interaural_delay(sample_rate);
  AudioClip rir = direct_path_rir(delay, geom.level_difference_db(), sample_rate);
  if (room.rt60_ms <= 0.0) return rir;

  const double rt60_samples = room.rt60_ms * 1e-3 * sample_rate;
  const auto start =
      static_cast<std::size_t>(kDirectPathOffset + std::ceil(std::abs(delay))) + 17;
  const auto tail_len = static_cast<std::size_t>(std::ceil(rt60_samples * 4.0 / 3.0));
  const double drr = room.drr_db.value_or(kDefaultDrrDb);
  const double decay = 3.0 * std::log(10.0) / rt60_samples;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& ch : rir.channels) {
    double direct_energy = 0.0;
    for (double v : ch) direct_energy += v * v;
    ch.resize(start + tail_len, 0.0);
    std::vector<double> tail(tail_len);
    double tail_energy = 0.0;
    for (std::size_t n = 0; n < tail_len; ++n) {
      tail[n] = normal(rng) * std::exp(-decay * double(n));
      tail_energy += tail[n] * tail[n];
    }
    const double scale = std::sqrt(direct_energy / std::pow(10.0, drr / 10.0) / tail_energy);
    for (std::size_t n = 0; n < tail_len; ++n) ch[start + n] += scale * tail[n];
  }
  return rir;
}

struct Mixture {
  AudioClip mixture;               // stereo
  std::vector<AudioClip> images;   // per-source stereo contribution

  // Evaluation reference for source i: its image summed over both ears,
  // matching the two-channel sum the separator resynthesizes.
  std::vector<double> reference(std::size_t i) const {
    const auto& img = images.at(i);
    std::vector<double> out(img.num_frames());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = img.left()[n] + img.right()[n];
    return out;
  }

  std::vector<std::vector<double>> references() const {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < images.size(); ++i) out.push_back(reference(i));
    return out;
  }
};

// Convolves each mono source with its stereo RIR and sums. Sources are peak
// normalized first unless `normalize` is false. The full convolution length
// is kept.
inline Mixture make_mixture(const std::vector<AudioClip>& sources,
                            const std::vector<AudioClip>& rirs, bool normalize = true) {
  if (sources.empty() || sources.size() != rirs.size())
    throw Error(ErrorKind::kContract, "need one stereo RIR per source");
  Mixture out;
  std::size_t length = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& src = sources[i];
    const auto& rir = rirs[i];
    src.validate();
    rir.validate();
    if (src.num_channels() != 1) throw Error(ErrorKind::kContract, "sources must be mono");
    if (src.empty()) throw Error(ErrorKind::kContract, "empty source");
    if (rir.num_channels() != 2 || rir.empty())
      throw Error(ErrorKind::kContract, "RIRs must be non-empty stereo clips");
    if (src.sample_rate != kPipelineRate || rir.sample_rate != kPipelineRate)
      throw Error(ErrorKind::kContract, "sources and RIRs must be 16000 Hz");
    std::vector<double> s = src.channels[0];
    if (normalize) {
      double peak = 0.0;
      for (double v : s) peak = std::max(peak, std::abs(v));
      if (peak > 0.0)
        for (double& v : s) v /= peak;
    }
    AudioClip img = AudioClip::stereo(convolve(s, rir.left()), convolve(s, rir.right()));
    length = std::max(length, img.num_frames());
    out.images.push_back(std::move(img));
  }
  std::vector<double> left(length, 0.0), right(length, 0.0);
  for (auto& img : out.images) {
    for (auto& ch : img.channels) ch.resize(length, 0.0);
    for (std::size_t n = 0; n < length; ++n) {
      left[n] += img.left()[n];
      right[n] += img.right()[n];
    }
  }
  out.mixture = AudioClip::stereo(std::move(left), std::move(right));
  return out;
}

inline std::string azimuth_label(double azimuth_deg) {
  std::ostringstream os;
  if (azimuth_deg == std::round(azimuth_deg))
    os << static_cast<long long>(azimuth_deg);
  else
    os << azimuth_deg;
  return os.str();
}

// Loads `<dir>/<room>/<azimuth>_L.wav` and `_R.wav`, resampled to 16 kHz.
inline AudioClip load_rir_set(const std::filesystem::path& dir, const std::string& room,
                              double azimuth_deg) {
  const auto base = dir / room;
  const std::string stem = azimuth_label(azimuth_deg);
  std::vector<std::vector<double>> ears;
  for (const char* side : {"_L.wav", "_R.wav"}) {
    const auto path = base / (stem + side);
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::kIo, "missing RIR file " + path.string());
    AudioClip clip = resample_to_16k(read_wav(path));
    ears.push_back(std::move(clip.channels[0]));
  }
  const std::size_t len = std::max(ears[0].size(), ears[1].size());
  for (auto& e : ears) e.resize(len, 0.0);
  return AudioClip::stereo(std::move(ears[0]), std::move(ears[1]));
}

// One line of a mixture manifest.
struct ManifestRecord {
  std::string trial_id;
  std::string room;
  double azimuth_deg = 0.0;
  double masker_azimuth_deg = 0.0;
  std::uint64_t seed = 0;
  std::string mixture;
  std::vector<std::string> references;

  nlohmann::json to_json() const {
    return {{"trial", trial_id},       {"room", room},
            {"azimuth", azimuth_deg},  {"masker_azimuth", masker_azimuth_deg},
            {"seed", seed},            {"mixture", mixture},
            {"references", references}};
  }

  static ManifestRecord from_json(const nlohmann::json& j) {
    ManifestRecord r;
    try {
      r.trial_id = j.at("trial").get<std::string>();
      r.room = j.at("room").get<std::string>();
      r.azimuth_deg = j.at("azimuth").get<double>();
      r.masker_azimuth_deg = j.value("masker_azimuth", 0.0);
      r.seed = j.at("seed").get<std::uint64_t>();
      r.mixture = j.at("mixture").get<std::string>();
      r.references = j.at("references").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kFormat, std::string("bad manifest record: ") + e.what());
    }
    return r;
  }
};

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(ManifestRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::kFormat, std::string("bad manifest line: ") + e.what());
    }
  }
  return out;
}

}  // namespace binsep
