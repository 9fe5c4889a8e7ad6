// Copyright 2026 The w2vj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "w2vj/audio.hpp"
#include "w2vj/rng.hpp"

namespace w2vj {
namespace {

Waveform noise_wave(std::size_t n, std::uint64_t seed) {
  Waveform w;
  w.samples = testing::random_values(n, seed, 0.5);
  return w;
}

TEST(Fbank, FrameCountForOneSecond) {
  EXPECT_EQ(fbank_num_frames(16000), 98u);
  const auto f = extract_fbank(noise_wave(16000, 1));
  EXPECT_EQ(f.rows, 98u);
  EXPECT_EQ(f.cols, 80u);
}

TEST(Fbank, ExactlyOneWindow) { EXPECT_EQ(extract_fbank(noise_wave(400, 2)).rows, 1u); }

TEST(Fbank, ShorterThanWindowIsAnError) { EXPECT_THROW(extract_fbank(noise_wave(399, 3)), AudioError); }

TEST(Fbank, FrameCountFormulaHoldsForRandomLengths) {
  auto rng = make_rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = 400 + rng() % 6000;
    EXPECT_EQ(extract_fbank(noise_wave(n, i)).rows, 1 + (n - 400) / 160) << n;
  }
}

TEST(Fbank, SilenceHitsTheLogFloorEverywhere) {
  Waveform w;
  w.samples.assign(1600, 0.0);
  const auto f = extract_fbank(w);
  for (double v : f.data) EXPECT_EQ(v, std::log(kLogEnergyFloor));
}

TEST(Fbank, ShiftingByOneHopShiftsOneFrame) {
  const auto w = noise_wave(4000, 5);
  Waveform shifted;
  shifted.samples.assign(w.samples.begin() + 160, w.samples.end());
  const auto a = extract_fbank(w);
  const auto b = extract_fbank(shifted);
  ASSERT_EQ(a.rows, b.rows + 1);
  for (std::size_t t = 0; t < b.rows; ++t)
    for (std::size_t d = 0; d < 80; ++d) EXPECT_NEAR(a.at(t + 1, d), b.at(t, d), 1e-6);
}

TEST(Fbank, PureToneEnergyPeaksNearItsMelBin) {
  Waveform w;
  for (int i = 0; i < 4000; ++i) w.samples.push_back(0.5 * std::sin(2 * M_PI * 1000.0 * i / 16000.0));
  Waveform w2;
  for (int i = 0; i < 4000; ++i) w2.samples.push_back(0.5 * std::sin(2 * M_PI * 3000.0 * i / 16000.0));
  auto argmax = [](const FeatureMatrix& f) {
    auto r = f.row(5);
    return std::max_element(r.begin(), r.end()) - r.begin();
  };
  EXPECT_LT(argmax(extract_fbank(w)), argmax(extract_fbank(w2)));
}

TEST(Cmvn, ConstantCorpusGivesFlooredVariance) {
  FeatureMatrix f(10, 80, 3.25);
  const auto s = estimate_cmvn(std::span(&f, 1));
  for (std::size_t d = 0; d < 80; ++d) {
    EXPECT_EQ(s.mean[d], 3.25);
    EXPECT_EQ(s.variance[d], kCmvnVarianceFloor);
  }
  EXPECT_EQ(s.frame_count, 10u);
}

TEST(Cmvn, TwoSingleFrameMatrices) {
  std::vector<FeatureMatrix> corpus{FeatureMatrix(1, 80, 0.0), FeatureMatrix(1, 80, 2.0)};
  const auto s = estimate_cmvn(corpus);
  for (std::size_t d = 0; d < 80; ++d) {
    EXPECT_DOUBLE_EQ(s.mean[d], 1.0);
    EXPECT_DOUBLE_EQ(s.variance[d], 1.0);
  }
}

TEST(Cmvn, MatchesBruteForceTwoPass) {
  std::vector<FeatureMatrix> corpus;
  auto rng = make_rng(6);
  std::size_t total = 0;
  while (total < 1000) {
    const std::size_t rows = std::min<std::size_t>(1 + rng() % 90, 1000 - total);
    FeatureMatrix f(rows, 80);
    f.data = testing::random_values(rows * 80, rng(), 4.0);
    for (auto& v : f.data) v += 7.0;
    corpus.push_back(f);
    total += rows;
  }
  const auto s = estimate_cmvn(corpus);
  ASSERT_EQ(s.frame_count, 1000u);
  for (std::size_t d = 0; d < 80; ++d) {
    double sum = 0.0;
    for (const auto& f : corpus)
      for (std::size_t t = 0; t < f.rows; ++t) sum += f.at(t, d);
    const double mean = sum / 1000.0;
    double sq = 0.0;
    for (const auto& f : corpus)
      for (std::size_t t = 0; t < f.rows; ++t) sq += (f.at(t, d) - mean) * (f.at(t, d) - mean);
    EXPECT_NEAR(s.mean[d], mean, 1e-10);
    EXPECT_NEAR(s.variance[d], sq / 1000.0, 1e-10);
  }
}

TEST(Cmvn, MergeIsAssociative) {
  FeatureMatrix a(7, 80), b(11, 80), c(3, 80);
  a.data = testing::random_values(a.data.size(), 1);
  b.data = testing::random_values(b.data.size(), 2);
  c.data = testing::random_values(c.data.size(), 3);
  CmvnAccumulator left, right, ab, bc;
  ab.add(a);
  ab.add(b);
  left = ab;
  CmvnAccumulator cc;
  cc.add(c);
  left.merge(cc);
  bc.add(b);
  bc.add(c);
  right.add(a);
  right.merge(bc);
  const auto l = left.finish(), r = right.finish();
  for (std::size_t d = 0; d < 80; ++d) {
    EXPECT_NEAR(l.mean[d], r.mean[d], 1e-14);
    EXPECT_NEAR(l.variance[d], r.variance[d], 1e-14);
  }
}

TEST(Cmvn, SelfNormalizationGivesZeroMeanUnitVariance) {
  FeatureMatrix f(200, 80);
  f.data = testing::random_values(f.data.size(), 8, 3.0);
  const auto s = estimate_cmvn(std::span(&f, 1));
  const auto g = apply_cmvn(f, s);
  const auto check = estimate_cmvn(std::span(&g, 1));
  for (std::size_t d = 0; d < 80; ++d) {
    EXPECT_NEAR(check.mean[d], 0.0, 1e-6);
    EXPECT_NEAR(check.variance[d], 1.0, 1e-6);
  }
}

TEST(Cmvn, IdentityStatsAndInverse) {
  FeatureMatrix f(20, 80);
  f.data = testing::random_values(f.data.size(), 9, 5.0);
  CmvnStats unit{std::vector<double>(80, 0.0), std::vector<double>(80, 1.0), 1};
  EXPECT_EQ(apply_cmvn(f, unit).data, f.data);
  CmvnStats s{testing::random_values(80, 10, 2.0), testing::random_values(80, 11, 1.0), 5};
  for (auto& v : s.variance) v = v * v + 0.1;
  const auto back = invert_cmvn(apply_cmvn(f, s), s);
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_NEAR(back.data[i], f.data[i], 1e-9);
}

TEST(Cmvn, Errors) {
  EXPECT_THROW(estimate_cmvn({}), std::invalid_argument);
  CmvnStats s{std::vector<double>(80, 0.0), std::vector<double>(80, 1.0), 1};
  EXPECT_THROW(apply_cmvn(FeatureMatrix(3, 40), s), std::invalid_argument);
}

TEST(Cmvn, StatsFileRoundTripsExactly) {
  const auto dir = std::filesystem::temp_directory_path() / "w2vj_cmvn_test";
  std::filesystem::create_directories(dir);
  CmvnStats s{testing::random_values(80, 12, 1e3), testing::random_values(80, 13, 1.0), 12345};
  for (auto& v : s.variance) v = std::abs(v) + 1e-8;
  s.mean[0] = 1.0 / 3.0;
  write_cmvn(dir / "cmvn.txt", s);
  const auto r = read_cmvn(dir / "cmvn.txt");
  EXPECT_EQ(r.mean, s.mean);
  EXPECT_EQ(r.variance, s.variance);
  EXPECT_EQ(r.frame_count, s.frame_count);
}

TEST(WavIo, RoundTripWithinQuantization) {
  const auto dir = std::filesystem::temp_directory_path() / "w2vj_wav_test";
  std::filesystem::create_directories(dir);
  const auto w = noise_wave(1234, 14);
  write_wav(dir / "a.wav", w);
  const auto r = read_wav(dir / "a.wav");
  ASSERT_EQ(r.samples.size(), w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32768.0);
  write_wav(dir / "b.wav", r);
  EXPECT_EQ(read_wav(dir / "b.wav").samples, r.samples);
}

TEST(FeatureFile, RoundTripsBitExactly) {
  const auto dir = std::filesystem::temp_directory_path() / "w2vj_feat_test";
  std::filesystem::create_directories(dir);
  FeatureMatrix f(13, 80);
  f.data = testing::random_values(f.data.size(), 15);
  write_features(dir / "x.feat", f);
  const auto g = read_features(dir / "x.feat");
  EXPECT_EQ(g.rows, 13u);
  EXPECT_EQ(g.data, f.data);
}

}  // namespace
}  // namespace w2vj
