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

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "binsep/audio.hpp"
#include "binsep/error.hpp"
#include "binsep/fusion.hpp"
#include "binsep/metrics.hpp"
#include "binsep/pipeline.hpp"
#include "binsep/room.hpp"
#include "binsep/speech.hpp"

namespace binsep {

struct Variant {
  std::string name;
  MaskType mask = MaskType::kSubband;
  IldProvider ild_provider;
  bool garbage = false;
  std::array<double, 4> betas{1.0, 1.0, 1.0, 1.0};
};

// Command-line values that replace the corresponding plan fields.
struct PlanOverrides {
  std::optional<MaskType> mask;
  std::optional<IldProvider> ild_provider;
  std::optional<bool> garbage;
  std::optional<std::size_t> iterations;
  std::optional<std::array<double, 4>> betas;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> rir_dir;
};

struct ExperimentPlan {
  std::vector<RoomSpec> rooms;
  std::vector<double> azimuths;
  std::size_t trials_per_cell = 5;
  std::vector<Variant> variants;
  std::uint64_t seed = 1;
  std::size_t iterations = 16;
  double masker_azimuth = 0.0;
  double duration_s = 1.05;
  std::optional<std::string> rir_dir;
  std::vector<std::string> source_files;  // mono 16/48 kHz WAVs; empty = synthetic speech

  void validate() const {
    if (rooms.empty()) throw Error(ErrorKind::kContract, "plan has no rooms");
    if (azimuths.empty()) throw Error(ErrorKind::kContract, "plan has no azimuths");
    if (trials_per_cell < 1) throw Error(ErrorKind::kContract, "plan needs at least one trial");
    if (variants.empty()) throw Error(ErrorKind::kContract, "plan has no variants");
    if (!(duration_s > 0.0)) throw Error(ErrorKind::kContract, "duration must be positive");
    if (source_files.size() == 1)
      throw Error(ErrorKind::kContract, "need at least two source files");
    for (const auto& r : rooms) r.validate();
  }

  void apply(const PlanOverrides& o) {
    if (o.seed) seed = *o.seed;
    if (o.iterations) iterations = *o.iterations;
    if (o.rir_dir) rir_dir = *o.rir_dir;
    for (auto& v : variants) {
      if (o.mask) v.mask = *o.mask;
      if (o.ild_provider) v.ild_provider = *o.ild_provider;
      if (o.garbage) v.garbage = *o.garbage;
      if (o.betas) v.betas = *o.betas;
    }
  }

  static ExperimentPlan from_json(const nlohmann::json& j) {
    ExperimentPlan plan;
    try {
      for (const auto& r : j.at("rooms")) {
        if (r.is_string()) {
          plan.rooms.push_back(room_by_name(r.get<std::string>()));
          continue;
        }
        RoomSpec spec;
        spec.name = r.at("name").get<std::string>();
        spec.rt60_ms = r.at("rt60_ms").get<double>();
        if (r.contains("drr_db")) spec.drr_db = r.at("drr_db").get<double>();
        if (r.contains("dims_m")) spec.dims_m = r.at("dims_m").get<std::array<double, 3>>();
        if (r.contains("source_mic_distance_m"))
          spec.source_mic_distance_m = r.at("source_mic_distance_m").get<double>();
        plan.rooms.push_back(spec);
      }
      plan.azimuths = j.at("azimuths").get<std::vector<double>>();
      plan.trials_per_cell = j.value("trials_per_cell", plan.trials_per_cell);
      plan.seed = j.value("seed", plan.seed);
      plan.iterations = j.value("iterations", plan.iterations);
      plan.masker_azimuth = j.value("masker_azimuth", plan.masker_azimuth);
      plan.duration_s = j.value("duration_s", plan.duration_s);
      if (j.contains("rir_dir")) plan.rir_dir = j.at("rir_dir").get<std::string>();
      plan.source_files = j.value("source_files", std::vector<std::string>{});
      for (const auto& v : j.at("variants")) {
        Variant var;
        var.name = v.at("name").get<std::string>();
        var.mask = parse_mask_type(v.value("mask", std::string("subband")));
        var.ild_provider = IldProvider::parse(v.value("ild_provider", std::string("em")));
        var.garbage = v.value("garbage", false);
        if (v.contains("betas")) var.betas = v.at("betas").get<std::array<double, 4>>();
        plan.variants.push_back(var);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kFormat, std::string("bad experiment plan: ") + e.what());
    }
    plan.validate();
    return plan;
  }

  static ExperimentPlan load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::kIo, "cannot open plan " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
    }
    return from_json(j);
  }
};

// splitmix64 over a list of words; stable seed derivation for trials.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t w : words) {
    h += w + 0x9E3779B97F4A7C15ull;
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    h = z ^ (z >> 31);
  }
  return h;
}

// A two-source trial: target at `azimuth`, masker at the plan's masker
// azimuth. Source seeds do not depend on the room, so rooms compare on
// matched material.
struct TrialSetup {
  std::string trial_id;
  std::uint64_t source_seed = 0;
  std::uint64_t rir_seed = 0;
  Mixture mix;
};

inline std::vector<double> fit_length(std::vector<double> x, std::size_t n) {
  x.resize(n, 0.0);
  return x;
}

inline TrialSetup build_trial(const ExperimentPlan& plan, std::size_t room_index,
                              std::size_t azimuth_index, std::size_t trial) {
  const RoomSpec& room = plan.rooms.at(room_index);
  const double azimuth = plan.azimuths.at(azimuth_index);
  TrialSetup t;
  t.source_seed = derive_seed({plan.seed, 1, azimuth_index, trial});
  t.rir_seed = derive_seed({plan.seed, 2, room_index, azimuth_index, trial});
  t.trial_id = room.name + "_" + azimuth_label(azimuth) + "_t" + std::to_string(trial);

  const auto n = static_cast<std::size_t>(std::llround(plan.duration_s * kPipelineRate));
  std::vector<AudioClip> sources;
  if (plan.source_files.empty()) {
    sources.push_back(AudioClip::mono(synth_speech(plan.duration_s, t.source_seed)));
    sources.push_back(AudioClip::mono(synth_speech(plan.duration_s, derive_seed({t.source_seed, 7}))));
  } else {
    const std::size_t count = plan.source_files.size();
    const std::size_t a = t.source_seed % count;
    const std::size_t b = (a + 1 + derive_seed({t.source_seed, 7}) % (count - 1)) % count;
    for (std::size_t idx : {a, b}) {
      AudioClip clip = resample_to_16k(read_wav(plan.source_files[idx]));
      if (clip.num_channels() != 1)
        throw Error(ErrorKind::kContract, plan.source_files[idx] + ": sources must be mono");
      sources.push_back(AudioClip::mono(fit_length(clip.channels[0], n)));
    }
  }

  std::vector<AudioClip> rirs;
  if (plan.rir_dir) {
    rirs.push_back(load_rir_set(*plan.rir_dir, room.name, azimuth));
    rirs.push_back(load_rir_set(*plan.rir_dir, room.name, plan.masker_azimuth));
  } else {
    rirs.push_back(synth_rir(room, {azimuth}, t.rir_seed));
    rirs.push_back(synth_rir(room, {plan.masker_azimuth}, derive_seed({t.rir_seed, 7})));
  }
  t.mix = make_mixture(sources, rirs);
  return t;
}

struct TrialRecord {
  std::string room;
  double azimuth_deg = 0.0;
  std::size_t trial = 0;
  std::string variant;
  std::string trial_id;
  bool ok = false;
  std::string error;
  SeparationReport report;   // reference 0 is the target
  double psi_garbage = 0.0;
  bool low_confidence = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"room", room},         {"azimuth_deg", azimuth_deg},
                     {"trial", trial},       {"variant", variant},
                     {"trial_id", trial_id}, {"ok", ok}};
    if (ok) {
      j["report"] = report.to_json();
      j["psi_garbage"] = psi_garbage;
      j["low_confidence"] = low_confidence;
    } else {
      j["error"] = error;
    }
    return j;
  }

  static TrialRecord from_json(const nlohmann::json& j) {
    TrialRecord r;
    r.room = j.at("room").get<std::string>();
    r.azimuth_deg = j.at("azimuth_deg").get<double>();
    r.trial = j.at("trial").get<std::size_t>();
    r.variant = j.at("variant").get<std::string>();
    r.trial_id = j.value("trial_id", std::string());
    r.ok = j.at("ok").get<bool>();
    if (r.ok) {
      const auto& rep = j.at("report");
      r.report.sdr_db = rep.at("sdr_db").get<std::vector<double>>();
      r.report.stoi = rep.at("stoi").get<std::vector<double>>();
      r.report.mean_sdr_db = rep.at("mean_sdr_db").get<double>();
      r.report.mean_stoi = rep.at("mean_stoi").get<double>();
      r.psi_garbage = j.value("psi_garbage", 0.0);
      r.low_confidence = j.value("low_confidence", false);
    } else {
      r.error = j.value("error", std::string());
    }
    return r;
  }
};

inline SeparationConfig variant_config(const ExperimentPlan& plan, const Variant& v,
                                       const TrialSetup& trial, const std::string& room,
                                       double azimuth) {
  SeparationConfig cfg;
  cfg.em.iterations = plan.iterations;
  cfg.em.use_garbage = v.garbage;
  cfg.fusion.type = v.mask;
  cfg.fusion.betas = v.betas;
  cfg.ild_provider = v.ild_provider;
  if (cfg.ild_provider.kind == IldProvider::Kind::kFile) {
    auto replace = [](std::string s, const std::string& key, const std::string& value) {
      for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
      return s;
    };
    std::string p = cfg.ild_provider.path;
    p = replace(p, "{trial}", trial.trial_id);
    p = replace(p, "{azimuth}", azimuth_label(azimuth));
    p = replace(p, "{room}", room);
    cfg.ild_provider.path = p;
  }
  return cfg;
}

inline TrialRecord blank_record(const std::string& room, double azimuth, std::size_t trial,
                                const std::string& variant) {
  TrialRecord r;
  r.room = room;
  r.azimuth_deg = azimuth;
  r.trial = trial;
  r.variant = variant;
  return r;
}

// Runs every (room, azimuth, trial, variant). Each record is passed to
// `append` as soon as it exists. A failing trial records its reason for each
// variant and skips the rest of its cell.
inline std::vector<TrialRecord> run_experiment(
    const ExperimentPlan& plan, const std::function<void(const TrialRecord&)>& append = {}) {
  plan.validate();
  std::vector<TrialRecord> records;
  auto emit = [&](TrialRecord r) {
    if (append) append(r);
    records.push_back(std::move(r));
  };
  for (std::size_t ri = 0; ri < plan.rooms.size(); ++ri)
    for (std::size_t ai = 0; ai < plan.azimuths.size(); ++ai)
      for (std::size_t trial = 0; trial < plan.trials_per_cell; ++trial) {
        const double az = plan.azimuths[ai];
        std::vector<TrialRecord> batch;
        std::string failure;
        try {
          TrialSetup setup = build_trial(plan, ri, ai, trial);
          const auto refs = setup.mix.references();
          SeparationSession session(setup.mix.mixture);
          for (const auto& v : plan.variants) {
            const auto cfg = variant_config(plan, v, setup, plan.rooms[ri].name, az);
            const auto out = session.separate(cfg, &refs);
            TrialRecord r = blank_record(plan.rooms[ri].name, az, trial, v.name);
            r.trial_id = setup.trial_id;
            r.ok = true;
            r.report = evaluate_separation(out.sources, refs);
            r.psi_garbage = out.psi_garbage;
            r.low_confidence = out.low_confidence;
            batch.push_back(std::move(r));
          }
        } catch (const Error& e) {
          failure = e.what();
        }
        if (failure.empty()) {
          for (auto& r : batch) emit(std::move(r));
          continue;
        }
        for (const auto& v : plan.variants) {
          TrialRecord r = blank_record(plan.rooms[ri].name, az, trial, v.name);
          r.error = failure;
          emit(std::move(r));
        }
        break;
      }
  return records;
}

inline std::vector<TrialRecord> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open results " + path.string());
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(TrialRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kFormat,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace detail {

struct CellStats {
  std::size_t trials = 0, failed = 0;
  double sdr = 0.0, stoi = 0.0, target_sdr = 0.0, target_stoi = 0.0;

  void add(const TrialRecord& r) {
    ++trials;
    if (!r.ok) {
      ++failed;
      return;
    }
    sdr += r.report.mean_sdr_db;
    stoi += r.report.mean_stoi;
    target_sdr += r.report.sdr_db.at(0);
    target_stoi += r.report.stoi.at(0);
  }
};

inline std::string format_cell(const std::string& room, const std::string& azimuth,
                               const std::string& variant, const CellStats& s) {
  const std::size_t ok = s.trials - s.failed;
  char buf[512];
  if (ok == 0) {
    std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%zu\t%zu\t-\t-\t-\t-\n", room.c_str(),
                  azimuth.c_str(), variant.c_str(), s.trials, s.failed);
  } else {
    const double n = double(ok);
    std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%zu\t%zu\t%.4f\t%.2f\t%.4f\t%.2f\n",
                  room.c_str(), azimuth.c_str(), variant.c_str(), s.trials, s.failed,
                  s.sdr / n, 100.0 * s.stoi / n, s.target_sdr / n, 100.0 * s.target_stoi / n);
  }
  return buf;
}

}  // namespace detail

// Per (room, azimuth, variant) means, STOI in percent. Rows keep
// first-appearance order, so the same records always give the same bytes.
inline std::string results_table(const std::vector<TrialRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, detail::CellStats> cells;
  for (const auto& r : records) {
    const Key cell{r.room, azimuth_label(r.azimuth_deg), r.variant};
    if (!cells.contains(cell)) order.push_back(cell);
    cells[cell].add(r);
  }
  std::string out =
      "room\tazimuth\tvariant\ttrials\tfailed\tmean_sdr_db\tmean_stoi_pct\ttarget_sdr_db\t"
      "target_stoi_pct\n";
  for (const auto& k : order)
    out += detail::format_cell(std::get<0>(k), std::get<1>(k), std::get<2>(k), cells[k]);
  return out;
}

}  // namespace binsep
