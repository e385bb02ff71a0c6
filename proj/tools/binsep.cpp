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

// binsep: separate, evaluate, synthmix, experiment, export-pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "binsep/binsep.hpp"

namespace {

namespace fs = std::filesystem;
using binsep::Error;
using binsep::ErrorKind;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::array<double, 4> parse_betas(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 4) throw Error(ErrorKind::kUsage, "--betas needs four comma-separated values");
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    try {
      b[i] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kUsage, "bad --betas value '" + parts[i] + "'");
    }
  }
  return b;
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw Error(ErrorKind::kUsage, "--garbage takes on or off");
}

std::vector<double> mono_signal(const fs::path& path) {
  binsep::AudioClip clip = binsep::read_wav(path);
  binsep::require_pipeline_rate(clip, path.string());
  if (clip.num_channels() == 1) return clip.channels[0];
  std::vector<double> sum(clip.num_frames());
  for (std::size_t n = 0; n < sum.size(); ++n) sum[n] = clip.left()[n] + clip.right()[n];
  return sum;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::kIo, "cannot append to " + path.string());
  out << line << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

// Options shared by separate and experiment.
struct PipelineFlags {
  std::string mask;
  std::string ild_provider;
  std::string garbage;
  std::size_t iterations = 0;
  std::string betas;
  std::uint64_t seed = 0;
  std::string rir_dir;

  void add_to(CLI::App& app) {
    app.add_option("--mask", mask, "product | subband | weighted_subband");
    app.add_option("--ild-provider", ild_provider, "em | file:<path>");
    app.add_option("--garbage", garbage, "on | off");
    app.add_option("--iterations", iterations, "EM iterations")->check(CLI::PositiveNumber);
    app.add_option("--betas", betas, "weighted sub-band gains a,b,c,d");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--rir-dir", rir_dir, "measured RIR directory <room>/<azimuth>_{L,R}.wav");
  }

  binsep::PlanOverrides overrides(const CLI::App& app) const {
    binsep::PlanOverrides o;
    if (app.count("--mask")) o.mask = binsep::parse_mask_type(mask);
    if (app.count("--ild-provider")) o.ild_provider = binsep::IldProvider::parse(ild_provider);
    if (app.count("--garbage")) o.garbage = parse_on_off(garbage);
    if (app.count("--iterations")) o.iterations = iterations;
    if (app.count("--betas")) o.betas = parse_betas(betas);
    if (app.count("--seed")) o.seed = seed;
    if (app.count("--rir-dir")) o.rir_dir = rir_dir;
    return o;
  }
};

int cmd_separate(const CLI::App& app, const PipelineFlags& flags, const std::string& input,
                 const std::string& prefix, const std::string& references, bool dump_masks) {
  const auto o = flags.overrides(app);
  binsep::AudioClip mixture = binsep::read_wav(input);
  binsep::require_stereo(mixture, input);
  binsep::require_pipeline_rate(mixture, input);

  binsep::SeparationConfig cfg;
  if (o.mask) cfg.fusion.type = *o.mask;
  if (o.ild_provider) cfg.ild_provider = *o.ild_provider;
  if (o.garbage) cfg.em.use_garbage = *o.garbage;
  if (o.iterations) cfg.em.iterations = *o.iterations;
  if (o.betas) cfg.fusion.betas = *o.betas;

  std::optional<std::vector<std::vector<double>>> refs;
  if (!references.empty()) {
    refs.emplace();
    for (const auto& p : split_list(references)) refs->push_back(mono_signal(p));
  }
  binsep::SeparationSession session(mixture, cfg.em.stft);
  const auto out = session.separate(cfg, refs ? &*refs : nullptr);

  for (std::size_t i = 0; i < out.sources.size(); ++i) {
    const std::string path = prefix + "_" + std::to_string(i + 1) + ".wav";
    binsep::write_wav(binsep::AudioClip::mono(out.sources[i]), path);
    std::cout << path << '\n';
  }
  if (dump_masks) {
    binsep::write_mask_file(out.ipd_masks, prefix + "_ipd.bsmk");
    binsep::write_mask_file(out.ild_masks, prefix + "_ild.bsmk");
    binsep::write_mask_file(out.fused_masks, prefix + "_mask.bsmk");
  }
  if (out.low_confidence) binsep::warn("source ordering is ambiguous");
  return 0;
}

int cmd_evaluate(const std::string& estimates, const std::string& references,
                 const std::string& results) {
  std::vector<std::vector<double>> est, ref;
  for (const auto& p : split_list(estimates)) est.push_back(mono_signal(p));
  for (const auto& p : split_list(references)) ref.push_back(mono_signal(p));
  if (est.size() != ref.size() || est.empty())
    throw Error(ErrorKind::kUsage, "need the same number of estimates and references");
  nlohmann::json record = binsep::evaluate_separation(est, ref).to_json();
  record["estimates"] = split_list(estimates);
  record["references"] = split_list(references);
  const std::string line = record.dump();
  if (!results.empty()) append_line(results, line);
  std::cout << line << '\n';
  return 0;
}

// Scales all outputs of a trial by one factor so none of them clip.
double headroom_gain(const binsep::Mixture& mix, const std::vector<std::vector<double>>& refs) {
  double peak = 0.0;
  for (const auto& ch : mix.mixture.channels)
    for (double v : ch) peak = std::max(peak, std::abs(v));
  for (const auto& r : refs)
    for (double v : r) peak = std::max(peak, std::abs(v));
  return peak > 0.99 ? 0.99 / peak : 1.0;
}

int cmd_synthmix(binsep::ExperimentPlan plan, const fs::path& out_dir) {
  plan.validate();
  fs::create_directories(out_dir);
  const fs::path manifest = out_dir / "manifest.jsonl";
  std::string text;
  for (std::size_t ri = 0; ri < plan.rooms.size(); ++ri)
    for (std::size_t ai = 0; ai < plan.azimuths.size(); ++ai)
      for (std::size_t trial = 0; trial < plan.trials_per_cell; ++trial) {
        const auto setup = binsep::build_trial(plan, ri, ai, trial);
        auto refs = setup.mix.references();
        const double g = headroom_gain(setup.mix, refs);
        binsep::AudioClip mixture = setup.mix.mixture;
        for (auto& ch : mixture.channels)
          for (double& v : ch) v *= g;
        binsep::ManifestRecord rec;
        rec.trial_id = setup.trial_id;
        rec.room = plan.rooms[ri].name;
        rec.azimuth_deg = plan.azimuths[ai];
        rec.masker_azimuth_deg = plan.masker_azimuth;
        rec.seed = setup.source_seed;
        rec.mixture = setup.trial_id + "_mix.wav";
        binsep::write_wav(mixture, out_dir / rec.mixture, binsep::WavEncoding::kFloat32);
        for (std::size_t i = 0; i < refs.size(); ++i) {
          for (double& v : refs[i]) v *= g;
          rec.references.push_back(setup.trial_id + "_ref" + std::to_string(i + 1) + ".wav");
          binsep::write_wav(binsep::AudioClip::mono(refs[i]), out_dir / rec.references.back(),
                            binsep::WavEncoding::kFloat32);
        }
        text += rec.to_json().dump() + '\n';
      }
  write_text(manifest, text);
  std::cout << manifest.string() << '\n';
  return 0;
}

int cmd_experiment(binsep::ExperimentPlan plan, const std::string& results,
                   const std::string& table) {
  plan.validate();
  if (!results.empty() && fs::exists(results)) fs::remove(results);
  const auto records = binsep::run_experiment(plan, [&](const binsep::TrialRecord& r) {
    if (!results.empty()) append_line(results, r.to_json().dump());
    if (!r.ok) binsep::warn(r.room + " " + std::to_string(r.azimuth_deg) + ": " + r.error);
  });
  const std::string text =
      binsep::results_table(results.empty() ? records : binsep::read_results(results));
  if (table.empty())
    std::cout << text;
  else
    write_text(table, text);
  return 0;
}

int cmd_export_pairs(const std::string& mixture, const std::string& sources,
                     const std::string& out_dir, std::string stem) {
  const binsep::AudioClip mix = binsep::read_wav(mixture);
  std::vector<binsep::AudioClip> srcs;
  for (const auto& p : split_list(sources)) srcs.push_back(binsep::read_wav(p));
  if (stem.empty()) stem = fs::path(mixture).stem().string();
  const auto files = binsep::export_training_pairs(mix, srcs, out_dir, stem);
  std::cout << files.ild.string() << '\n' << files.labels.string() << '\n';
  return 0;
}

binsep::ExperimentPlan plan_from_flags(const std::string& plan_path, const std::string& rooms,
                                       const std::string& azimuths, std::size_t trials,
                                       double masker, double duration,
                                       const std::string& sources) {
  binsep::ExperimentPlan plan;
  if (!plan_path.empty()) plan = binsep::ExperimentPlan::load(plan_path);
  if (!rooms.empty()) {
    plan.rooms.clear();
    for (const auto& r : split_list(rooms)) plan.rooms.push_back(binsep::room_by_name(r));
  }
  if (!azimuths.empty()) {
    plan.azimuths.clear();
    for (const auto& a : split_list(azimuths)) plan.azimuths.push_back(std::stod(a));
  }
  if (trials > 0) plan.trials_per_cell = trials;
  if (!std::isnan(masker)) plan.masker_azimuth = masker;
  if (duration > 0.0) plan.duration_s = duration;
  if (!sources.empty()) plan.source_files = split_list(sources);
  if (plan.variants.empty()) {
    binsep::Variant v;
    v.name = "default";
    plan.variants.push_back(v);
  }
  return plan;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Binaural two-source separation"};
  app.require_subcommand(1);

  PipelineFlags sep_flags;
  std::string sep_input, sep_prefix = "separated", sep_refs;
  bool dump_masks = false;
  auto* sep = app.add_subcommand("separate", "separate a 16 kHz stereo mixture");
  sep->add_option("input", sep_input, "stereo WAV")->required();
  sep->add_option("-o,--output", sep_prefix, "output prefix (<prefix>_1.wav, ...)");
  sep->add_option("--references", sep_refs, "reference WAVs a,b for oracle ordering");
  sep->add_flag("--dump-masks", dump_masks, "write IPD, ILD and fused masks");
  sep_flags.add_to(*sep);

  std::string ev_est, ev_ref, ev_results;
  auto* ev = app.add_subcommand("evaluate", "SDR/STOI of estimates against references");
  ev->add_option("--estimates", ev_est, "estimate WAVs a,b")->required();
  ev->add_option("--references", ev_ref, "reference WAVs a,b")->required();
  ev->add_option("--results", ev_results, "append the record to this file");

  PipelineFlags mix_flags;
  std::string mix_plan, mix_out, mix_rooms, mix_az, mix_sources;
  std::size_t mix_trials = 0;
  double mix_masker = std::nan(""), mix_duration = 0.0;
  auto* mix = app.add_subcommand("synthmix", "write mixtures, references and a manifest");
  mix->add_option("--plan", mix_plan, "experiment plan JSON");
  mix->add_option("--out-dir", mix_out, "output directory")->required();
  mix->add_option("--rooms", mix_rooms, "room names, e.g. X,A");
  mix->add_option("--azimuths", mix_az, "target azimuths in degrees");
  mix->add_option("--trials", mix_trials, "trials per cell");
  mix->add_option("--masker-azimuth", mix_masker, "masker azimuth in degrees");
  mix->add_option("--duration", mix_duration, "source duration in seconds");
  mix->add_option("--sources", mix_sources, "mono source WAVs; default synthetic speech");
  mix_flags.add_to(*mix);

  PipelineFlags exp_flags;
  std::string exp_plan, exp_results, exp_table;
  auto* exp = app.add_subcommand("experiment", "run an experiment plan");
  exp->add_option("plan", exp_plan, "experiment plan JSON")->required();
  exp->add_option("--results", exp_results, "line-delimited per-trial records");
  exp->add_option("--table", exp_table, "write the summary table here instead of stdout");
  exp_flags.add_to(*exp);

  std::string px_mix, px_sources, px_out, px_stem;
  auto* px = app.add_subcommand("export-pairs", "write ILD image and ideal-mask labels");
  px->add_option("--mixture", px_mix, "stereo mixture WAV")->required();
  px->add_option("--sources", px_sources, "source WAVs a,b")->required();
  px->add_option("--out-dir", px_out, "output directory")->required();
  px->add_option("--stem", px_stem, "file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (sep->parsed()) return cmd_separate(*sep, sep_flags, sep_input, sep_prefix, sep_refs, dump_masks);
    if (ev->parsed()) return cmd_evaluate(ev_est, ev_ref, ev_results);
    if (mix->parsed()) {
      auto plan = plan_from_flags(mix_plan, mix_rooms, mix_az, mix_trials, mix_masker,
                                  mix_duration, mix_sources);
      plan.apply(mix_flags.overrides(*mix));
      return cmd_synthmix(std::move(plan), mix_out);
    }
    if (exp->parsed()) {
      auto plan = binsep::ExperimentPlan::load(exp_plan);
      plan.apply(exp_flags.overrides(*exp));
      return cmd_experiment(std::move(plan), exp_results, exp_table);
    }
    if (px->parsed()) return cmd_export_pairs(px_mix, px_sources, px_out, px_stem);
  } catch (const Error& e) {
    std::cerr << "binsep: " << binsep::to_string(e.kind()) << " error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "binsep: " << e.what() << '\n';
    return 10;
  }
  return 0;
}
