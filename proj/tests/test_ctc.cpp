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
#include <limits>

#include "test_util.hpp"
#include "w2vj/ctc.hpp"
#include "w2vj/gradcheck.hpp"

namespace w2vj {
namespace {

using Target = std::vector<std::size_t>;

TEST(Ctc, SingleFrameUniform) {
  const auto loss = ctc_loss(Tensor::zeros({1, 2}), Target{1});
  EXPECT_NEAR(loss.item(), std::log(2.0), 1e-12);
}

TEST(Ctc, TwoFramesThreeAlignments) {
  EXPECT_NEAR(ctc_loss(Tensor::zeros({2, 2}), Target{1}).item(), -std::log(0.75), 1e-12);
}

TEST(Ctc, EmptyTargetIsAllBlankPath) {
  const auto logits = testing::random_tensor({5, 4}, 1, 2.0, false);
  double expected = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    double s = 0.0;
    for (std::size_t v = 0; v < 4; ++v) s += std::exp(logits(t, v));
    expected -= logits(t, 0) - std::log(s);
  }
  EXPECT_NEAR(ctc_loss(logits, Target{}).item(), expected, 1e-12);
}

TEST(Ctc, InadmissibleTargetIsAnError) {
  EXPECT_EQ(ctc_min_frames(Target{1, 1, 2}), 4u);
  EXPECT_THROW(ctc_loss(Tensor::zeros({3, 3}), Target{1, 1, 2}), CtcError);
  EXPECT_THROW(ctc_loss(Tensor::zeros({3, 3}), Target{0}), CtcError);
  EXPECT_THROW(ctc_loss(Tensor::zeros({3, 3}), Target{3}), CtcError);
  const auto logits = testing::random_values(9, 2);
  EXPECT_TRUE(std::isinf(ctc_loss_bruteforce(logits, 3, 3, Target{1, 1, 2})));
}

TEST(Ctc, MatchesBruteForceOnSmallGrid) {
  auto rng = make_rng(3);
  for (std::size_t t = 1; t <= 6; ++t) {
    for (std::size_t v = 2; v <= 4; ++v) {
      for (std::size_t l = 0; l <= 3; ++l) {
        for (int trial = 0; trial < 20; ++trial) {
          Target target(l);
          for (auto& k : target) k = 1 + rng() % (v - 1);
          const auto logits = testing::random_values(t * v, rng(), 3.0);
          const double oracle = ctc_loss_bruteforce(logits, t, v, target);
          if (!ctc_admissible(t, target)) {
            EXPECT_TRUE(std::isinf(oracle));
            EXPECT_THROW(ctc_loss(Tensor::from({t, v}, logits), target), CtcError);
            continue;
          }
          EXPECT_NEAR(ctc_loss(Tensor::from({t, v}, logits), target).item(), oracle, 1e-10);
        }
      }
    }
  }
}

TEST(Ctc, BruteForceRejectsLargeInstances) {
  EXPECT_THROW(ctc_loss_bruteforce(std::vector<double>(40 * 5, 0.0), 40, 5, Target{1}), CtcError);
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterSet params;
    params.add("logits", testing::random_tensor({7, 4}, seed, 2.0));
    const Target target{1, 3, 3};
    const auto report = gradient_check([&] { return ctc_loss(params.get("logits"), target); }, params);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(Ctc, PaddedRowsAreIgnored) {
  auto values = testing::random_values(6 * 3, 4);
  const auto a = ctc_loss(Tensor::from({6, 3}, values), Target{1, 2});
  values.insert(values.end(), {9.0, -9.0, 3.0, 1.0, 1.0, 1.0});
  auto padded = Tensor::from({8, 3}, values, true);
  const auto b = ctc_loss(padded, Target{1, 2}, 6);
  EXPECT_EQ(a.item(), b.item());
  backward(b);
  for (std::size_t i = 18; i < 24; ++i) EXPECT_EQ(padded.grad()[i], 0.0);
}

TEST(Ctc, AppendingCertainBlankFrameKeepsLoss) {
  auto rng = make_rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t t = 3 + rng() % 4, v = 4;
    Target target{1 + rng() % 3, 1 + rng() % 3};
    if (!ctc_admissible(t, target)) continue;
    auto values = testing::random_values(t * v, rng(), 2.0);
    const double before = ctc_loss(Tensor::from({t, v}, values), target).item();
    values.insert(values.end(), {0.0, -1000.0, -1000.0, -1000.0});
    EXPECT_EQ(ctc_loss(Tensor::from({t + 1, v}, values), target).item(), before);
  }
}

Tensor one_hot_path(const Target& path, std::size_t v) {
  std::vector<double> x(path.size() * v, 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) x[t * v + path[t]] = 5.0;
  return Tensor::from({path.size(), v}, x);
}

TEST(Greedy, CollapsesRepeatsAndDropsBlanks) {
  EXPECT_EQ(greedy_decode(one_hot_path({1, 1, 0, 2, 2}, 3)), (Target{1, 2}));
  EXPECT_EQ(greedy_decode(one_hot_path({0, 0, 0}, 3)), Target{});
  EXPECT_EQ(greedy_decode(one_hot_path({1, 0, 1}, 3)), (Target{1, 1}));
  EXPECT_EQ(greedy_decode(Tensor::zeros({2, 3})), Target{});
}

TEST(Greedy, RecoversTargetFromValidAlignment) {
  auto rng = make_rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Target target(1 + rng() % 4);
    for (auto& k : target) k = 1 + rng() % 4;
    Target path;
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (i > 0 && target[i] == target[i - 1]) path.push_back(0);
      for (std::size_t r = 0; r <= rng() % 3; ++r) path.push_back(target[i]);
      if (rng() % 2) path.push_back(0);
    }
    EXPECT_EQ(greedy_decode(one_hot_path(path, 5)), target);
  }
}

std::vector<std::string> chars(const char* s) { return tokenize(s, ErrorUnit::Char); }

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(chars("abc"), chars("abc")).total(), 0u);
  const auto sub = edit_distance(chars("abc"), chars("abd"));
  EXPECT_EQ(sub.substitutions, 1u);
  EXPECT_EQ(sub.total(), 1u);
  const auto del = edit_distance(chars("ab"), chars(""));
  EXPECT_EQ(del.deletions, 2u);
  const auto ins = edit_distance(chars(""), chars("xy"));
  EXPECT_EQ(ins.insertions, 2u);
  // One substitution beats an insertion plus a deletion.
  const auto tie = edit_distance(chars("a"), chars("b"));
  EXPECT_EQ(tie.substitutions, 1u);
  EXPECT_EQ(tie.insertions + tie.deletions, 0u);
}

TEST(EditDistance, IsAMetric) {
  auto rng = make_rng(7);
  auto random_seq = [&] {
    std::vector<std::string> s(rng() % 7);
    for (auto& c : s) c = std::string(1, static_cast<char>('a' + rng() % 3));
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_seq(), b = random_seq(), c = random_seq();
    const auto ab = edit_distance(a, b).total();
    EXPECT_EQ(ab, edit_distance(b, a).total());
    EXPECT_LE(edit_distance(a, c).total(), ab + edit_distance(b, c).total());
    EXPECT_EQ(edit_distance(a, a).total(), 0u);
  }
}

TEST(ErrorRate, JapaneseInsertion) {
  EXPECT_DOUBLE_EQ(error_rate({{"かな", "かんな"}}, ErrorUnit::Char), 0.5);
}

TEST(ErrorRate, PerfectIsZero) {
  EXPECT_EQ(error_rate({{"hello world", "hello world"}, {"a", "a"}}, ErrorUnit::Word), 0.0);
}

TEST(ErrorRate, CorpusPoolingDiffersFromAveraging) {
  // 1 error over 1 token and 0 errors over 9 tokens: pooled 0.1, averaged 0.5.
  const std::vector<TextPair> pairs{{"a", "b"}, {"abcdefghi", "abcdefghi"}};
  const auto s = score_corpus(pairs, ErrorUnit::Char);
  EXPECT_EQ(s.reference_tokens, 10u);
  EXPECT_DOUBLE_EQ(s.error_rate(), 0.1);
}

TEST(ErrorRate, WordsSplitOnSpaces) {
  EXPECT_EQ(tokenize("the  cat sat", ErrorUnit::Word), (std::vector<std::string>{"the", "cat", "sat"}));
  EXPECT_DOUBLE_EQ(error_rate({{"the cat sat", "the cat"}}, ErrorUnit::Word), 1.0 / 3.0);
}

TEST(ErrorRate, StripSpaceOnlyWhenRequested) {
  EXPECT_DOUBLE_EQ(error_rate({{"a b", "ab"}}, ErrorUnit::Char), 1.0 / 3.0);
  EXPECT_EQ(error_rate({{"a b", "ab"}}, ErrorUnit::Char, true), 0.0);
}

TEST(ErrorRate, AllEmptyReferencesIsAnError) {
  EXPECT_THROW(error_rate({{"", "abc"}}, ErrorUnit::Char), std::invalid_argument);
  EXPECT_DOUBLE_EQ(error_rate({{"", "x"}, {"ab", ""}}, ErrorUnit::Char), 1.5);
}

}  // namespace
}  // namespace w2vj
