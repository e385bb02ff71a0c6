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


#include "binsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "binsep/speech.hpp"
#include "gtest/gtest.h"
#include "sdr_oracle.hpp"
#include "test_util.hpp"

namespace binsep {
namespace {

using ::binsep::testing::qr_sdr_db;
using ::binsep::testing::white_noise;
using ::binsep::testing::with_orthogonal_noise;

TEST(Sdr, SelfEvaluationIsCapped) {
  const auto r = white_noise(4000, 1);
  const auto res = bss_eval_sdr({r}, {r});
  EXPECT_DOUBLE_EQ(res.sdr_db[0], kSdrCapDb);
}

TEST(Sdr, OrthogonalNoiseGivesExactRatio) {
  const auto r = white_noise(4000, 2);
  const auto w = white_noise(4000 + kSdrFilterTaps, 3);
  for (double target : {20.0, 10.0}) {
    const auto est = with_orthogonal_noise(r, w, kSdrFilterTaps, target);
    const auto res = bss_eval_sdr({est}, {r});
    EXPECT_NEAR(res.sdr_db[0], target, 0.1);
    EXPECT_NEAR(res.sdr_db[0], target, 1e-4);
  }
}

TEST(Sdr, AgreesWithQrLeastSquares) {
  const auto r = synth_speech(0.25, 4);
  auto est = r;
  const auto w = white_noise(r.size(), 5, 0.2);
  // Filtered reference plus noise: a 3-tap smear survives projection.
  for (std::size_t n = 2; n < est.size(); ++n) est[n] = 0.7 * r[n] + 0.2 * r[n - 2] + w[n];
  const double oracle = qr_sdr_db(est, r, kSdrFilterTaps);
  const auto res = bss_eval_sdr({est}, {r});
  EXPECT_NEAR(res.sdr_db[0], oracle, 1e-6);
}

TEST(Sdr, SwappedEstimatesReportPermutation) {
  const auto r1 = white_noise(4000, 6), r2 = white_noise(4000, 7);
  const auto n1 = white_noise(4000, 8, 0.1), n2 = white_noise(4000, 9, 0.1);
  std::vector<double> e1(4000), e2(4000);
  for (std::size_t n = 0; n < 4000; ++n) {
    e1[n] = r2[n] + n1[n];
    e2[n] = r1[n] + n2[n];
  }
  const auto res = bss_eval_sdr({e1, e2}, {r1, r2});
  EXPECT_EQ(res.perm.to_string(), "2,1");
  EXPECT_FALSE(res.ambiguous);
  EXPECT_GT(res.sdr_db[0], 15.0);
  EXPECT_GT(res.sdr_db[1], 15.0);
}

TEST(Sdr, IdenticalEstimatesAreAmbiguousAndKeepIdentity) {
  const auto r1 = white_noise(3000, 10), r2 = white_noise(3000, 11);
  std::vector<double> mix(3000);
  for (std::size_t n = 0; n < mix.size(); ++n) mix[n] = r1[n] + r2[n];
  const auto res = bss_eval_sdr({mix, mix}, {r1, r2});
  EXPECT_TRUE(res.perm.is_identity());
  EXPECT_TRUE(res.ambiguous);
}

TEST(Sdr, ScaleInvariant) {
  const auto r = synth_speech(0.3, 12);
  const auto w = white_noise(r.size(), 13, 0.1);
  std::vector<double> est(r.size()), scaled(r.size());
  for (std::size_t n = 0; n < r.size(); ++n) {
    est[n] = r[n] + w[n];
    scaled[n] = 3.7 * est[n];
  }
  EXPECT_NEAR(bss_eval_sdr({est}, {r}).sdr_db[0], bss_eval_sdr({scaled}, {r}).sdr_db[0], 1e-6);
}

TEST(Sdr, Errors) {
  const auto r = white_noise(1000, 14);
  const std::vector<double> silent(1000, 0.0);
  try {
    bss_eval_sdr({r}, {silent});
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
  EXPECT_THROW(bss_eval_sdr({r, r}, {r}), Error);
  EXPECT_THROW(bss_eval_sdr({}, {}), Error);
}

TEST(Metrics, DegradeMonotonicallyWithNoise) {
  const auto r = synth_speech(2.0, 15);
  const auto w = white_noise(r.size(), 16);
  double prev_sdr = 1e9, prev_stoi = 2.0;
  for (double g : {0.01, 0.03, 0.1, 0.3, 1.0}) {
    std::vector<double> est(r.size());
    for (std::size_t n = 0; n < r.size(); ++n) est[n] = r[n] + g * w[n];
    const double s = bss_eval_sdr({est}, {r}).sdr_db[0];
    const double q = stoi(est, r);
    EXPECT_LT(s, prev_sdr) << g;
    EXPECT_LE(q, prev_stoi) << g;
    prev_sdr = s;
    prev_stoi = q;
  }
}

TEST(Stoi, SelfScoreIsOne) {
  const auto r = synth_speech(2.0, 17);
  EXPECT_GE(stoi(r, r), 0.999);
}

TEST(Stoi, UnrelatedNoiseScoresLow) {
  const auto r = synth_speech(3.0, 18);
  const auto w = white_noise(r.size(), 19);
  std::vector<double> noisy(r.size());
  for (std::size_t n = 0; n < r.size(); ++n) noisy[n] = r[n] + 0.1 * w[n];
  const double noise_only = stoi(w, r);
  EXPECT_LE(noise_only, 0.4);
  EXPECT_LT(noise_only + 0.3, stoi(noisy, r));
}

TEST(Stoi, EstimateScaleInvariant) {
  const auto r = synth_speech(2.0, 20);
  const auto w = white_noise(r.size(), 21, 0.2);
  std::vector<double> est(r.size()), scaled(r.size());
  for (std::size_t n = 0; n < r.size(); ++n) {
    est[n] = r[n] + w[n];
    scaled[n] = 0.25 * est[n];
  }
  EXPECT_NEAR(stoi(est, r), stoi(scaled, r), 1e-9);
}

TEST(Stoi, TooShortIsContractError) {
  const auto r = synth_speech(0.2, 22);
  try {
    stoi(r, r);
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

// Values from the pystoi reference implementation on the same probe.
TEST(Stoi, MatchesReferenceImplementation) {
  const auto probe = testing::stoi_probe();
  const std::vector<std::pair<double, double>> golden = {
      {0.1, 0.6212181046120256}, {0.3, 0.5764243924681194}, {1.0, 0.5316439055625534}};
  for (const auto& [g, expected] : golden) {
    std::vector<double> est(probe.clean.size());
    for (std::size_t n = 0; n < est.size(); ++n) est[n] = probe.clean[n] + g * probe.noise[n];
    EXPECT_NEAR(stoi(est, probe.clean, 10000), expected, 1e-6) << g;
  }
  EXPECT_NEAR(stoi(probe.noise, probe.clean, 10000), 0.3348136998460448, 1e-6);
}

TEST(Stoi, ThirdOctaveBandsMatchReference) {
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {
      {7, 9},     {9, 11},    {11, 14},   {14, 17},   {17, 22},
      {22, 27},   {27, 34},   {34, 43},   {43, 55},   {55, 69},
      {69, 87},   {87, 109},  {109, 138}, {138, 174}, {174, 219}};
  EXPECT_EQ(detail::third_octave_bands(10000, 512, 15, 150.0), expected);
}

TEST(Evaluate, ReportFollowsPermutation) {
  const auto r1 = synth_speech(2.0, 23), r2 = synth_speech(2.0, 24);
  const auto report = evaluate_separation({r2, r1}, {r1, r2});
  EXPECT_EQ(report.perm.to_string(), "2,1");
  EXPECT_DOUBLE_EQ(report.sdr_db[0], kSdrCapDb);
  EXPECT_GE(report.stoi[0], 0.999);
  EXPECT_LE(report.stoi[0], 1.0);
  EXPECT_DOUBLE_EQ(report.mean_sdr_db, kSdrCapDb);
}

}  // namespace
}  // namespace binsep
