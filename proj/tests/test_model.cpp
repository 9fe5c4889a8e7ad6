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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "w2vj/encoder.hpp"
#include "w2vj/frontend.hpp"
#include "w2vj/gradcheck.hpp"
#include "w2vj/masking.hpp"
#include "w2vj/model.hpp"
#include "w2vj/ops.hpp"
#include "w2vj/quantizer.hpp"

namespace w2vj {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

FrontendConfig tiny_fbank() {
  auto c = FrontendConfig::fbank(6, 4);
  c.input_dim = 8;
  return c;
}

FrontendConfig tiny_wav() {
  FrontendConfig c;
  c.kind = FrontendKind::Wav;
  c.input_dim = 1;
  c.output_dim = 5;
  c.layers = {{4, 4, 2}, {4, 3, 2}};
  return c;
}

EncoderConfig tiny_encoder(EncoderKind kind, std::size_t blocks = 1, std::size_t dim = 8) {
  EncoderConfig c;
  c.kind = kind;
  c.blocks = blocks;
  c.dim = dim;
  c.heads = 2;
  c.ffn_dim = 12;
  c.conv_kernel = 3;
  c.pos_conv_kernel = 4;
  c.pos_conv_groups = 2;
  c.dropout = 0.0;
  return c;
}

void expect_rows_equal(const Tensor& a, const Tensor& b, std::size_t rows) {
  ASSERT_EQ(a.dim(1), b.dim(1));
  const std::size_t cols = a.dim(1);
  for (std::size_t i = 0; i < rows * cols; ++i) ASSERT_EQ(a.data()[i], b.data()[i]) << "entry " << i;
}

// Randomizes every parameter so zero-initialized biases and LN affines are exercised.
void perturb(ParameterSet& params, std::uint64_t seed, double scale = 0.3) {
  std::uint64_t k = 0;
  for (auto& [name, t] : params.entries()) {
    auto noise = testing::random_values(t.numel(), seed * 131 + k++, scale);
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += noise[i];
  }
}

TEST(FrontendLength, WaveformStack) {
  const auto c = FrontendConfig::wav();
  EXPECT_EQ(frontend_output_length(16000, c), 49u);
  EXPECT_EQ(frontend_output_length(400, c), 1u);
  EXPECT_EQ(frontend_min_input(c), 400u);
  EXPECT_THROW(frontend_output_length(399, c), FrontendError);
  for (std::size_t n : {4000u, 8000u, 32000u}) {
    const auto a = frontend_output_length(n, c), b = frontend_output_length(2 * n, c);
    EXPECT_LE(std::max(b, 2 * a) - std::min(b, 2 * a), 1u);
  }
}

TEST(FrontendLength, FbankIsCeilingQuarter) {
  const auto c = FrontendConfig::fbank();
  EXPECT_EQ(frontend_output_length(8750, c), 2188u);
  EXPECT_EQ(frontend_output_length(100, c), 25u);
  EXPECT_EQ(frontend_output_length(4, c), 1u);
  for (std::size_t t = 4; t < 3000; ++t) EXPECT_EQ(frontend_output_length(t, c), (t + 3) / 4);
  EXPECT_THROW(frontend_output_length(3, c), FrontendError);
  EXPECT_THROW(frontend_output_length(0, c), FrontendError);
}

TEST(Frontend, FbankBaseShapes) {
  const auto c = FrontendConfig::fbank();
  EXPECT_EQ(c.flattened_dim(), 640u);
  ParameterSet params;
  auto rng = make_rng(1);
  init_frontend(params, c, rng);
  EXPECT_EQ(params.get("frontend.proj.weight").shape(), (Shape{768, 640}));
  const auto out = encode_fbank(random_tensor({100, 80}, 2, 1.0, false), params, c);
  EXPECT_EQ(out.states.shape(), (Shape{25, 768}));
  EXPECT_EQ(out.true_length, 25u);
}

TEST(Frontend, ZeroInputAndBiasesGiveZeroOutput) {
  for (const auto& c : {tiny_fbank(), tiny_wav()}) {
    ParameterSet params;
    auto rng = make_rng(3);
    init_frontend(params, c, rng);
    const std::size_t len = c.kind == FrontendKind::Wav ? 40 : 12;
    const auto out = run_frontend(Tensor::zeros({len, c.input_dim}), params, c);
    for (double v : out.states.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Frontend, ActualLengthMatchesFormula) {
  auto rng = make_rng(4);
  for (const auto& c : {tiny_fbank(), tiny_wav()}) {
    ParameterSet params;
    init_frontend(params, c, rng);
    for (int i = 0; i < 40; ++i) {
      const std::size_t len = frontend_min_input(c) + rng() % 60;
      const auto out = run_frontend(random_tensor({len, c.input_dim}, i, 1.0, false), params, c);
      EXPECT_EQ(out.states.dim(0), frontend_output_length(len, c)) << len;
    }
  }
}

TEST(Frontend, PaddingNeverChangesValidOutputs) {
  auto rng = make_rng(5);
  for (const auto& c : {tiny_fbank(), tiny_wav()}) {
    ParameterSet params;
    init_frontend(params, c, rng);
    perturb(params, 6);
    for (std::size_t len : {9u, 13u, 14u, 23u}) {
      if (len < frontend_min_input(c)) continue;
      const auto x = testing::random_values(len * c.input_dim, len);
      auto padded = x;
      for (std::size_t i = 0; i < 7 * c.input_dim; ++i) padded.push_back(50.0 + i);
      const auto a = run_frontend(Tensor::from({len, c.input_dim}, x), params, c);
      const auto b = run_frontend(Tensor::from({len + 7, c.input_dim}, padded), params, c, len);
      EXPECT_EQ(b.true_length, a.true_length);
      expect_rows_equal(a.states, b.states, a.true_length);
    }
  }
}

TEST(Frontend, GradientCheckBothKinds) {
  for (const auto& c : {tiny_fbank(), tiny_wav()}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ParameterSet params;
      auto rng = make_rng(seed);
      init_frontend(params, c, rng);
      perturb(params, seed);
      const std::size_t len = c.kind == FrontendKind::Wav ? 30 : 11;
      const auto x = random_tensor({len, c.input_dim}, 100 + seed, 1.0, false);
      const auto report = gradient_check([&] { return weighted_sum(run_frontend(x, params, c).states, seed); }, params);
      EXPECT_TRUE(report.passed) << report.max_rel_error;
    }
  }
}

TEST(Encoder, IdentityAtZeroResidualWeights) {
  for (auto kind : {EncoderKind::Transformer, EncoderKind::Conformer}) {
    auto c = tiny_encoder(kind, 3);
    c.block_final_norm = false;
    ParameterSet params;
    auto rng = make_rng(7);
    init_encoder(params, c, rng);
    perturb(params, 8);
    zero_residual_outputs(params, c);
    const auto z = random_tensor({6, c.dim}, 9, 1.0, false);
    const auto out = encode(z, 0, {}, params, c, {}, true);
    EXPECT_EQ(out.hidden.size(), 3u);
    for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out.context.data()[i], z.data()[i]);
  }
}

TEST(Encoder, MaskEmbeddingReplacesMaskedRows) {
  auto c = tiny_encoder(EncoderKind::Conformer, 2);
  c.block_final_norm = false;
  ParameterSet params;
  auto rng = make_rng(10);
  init_encoder(params, c, rng);
  zero_residual_outputs(params, c);
  params.set_value("encoder.mask_emb", std::vector<double>(c.dim, 0.0));
  const auto z = random_tensor({5, c.dim}, 11, 1.0, false);
  const auto out = encode(z, 0, {false, true, false, false, true}, params, c);
  for (std::size_t d = 0; d < c.dim; ++d) {
    EXPECT_EQ(out.context(1, d), 0.0);
    EXPECT_EQ(out.context(4, d), 0.0);
    EXPECT_EQ(out.context(2, d), z(2, d));
  }
  EXPECT_THROW(encode(z, 0, std::vector<bool>(6, false), params, c), EncoderError);
}

TEST(Encoder, TransformerShapeAndPermutationEquivariance) {
  auto c = tiny_encoder(EncoderKind::Transformer, 2);
  ParameterSet params;
  auto rng = make_rng(12);
  init_encoder(params, c, rng);
  perturb(params, 13);
  for (std::size_t t = 1; t <= 64; t += 9) {
    EXPECT_EQ(encode(random_tensor({t, c.dim}, t, 1.0, false), 0, {}, params, c).context.shape(), (Shape{t, c.dim}));
  }
  c.pos_conv_kernel = 0;
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  const auto z = random_tensor({5, c.dim}, 14, 1.0, false);
  const auto a = encode(z, 0, {}, params, c).context;
  const auto b = encode(ops::gather_rows(z, perm), 0, {}, params, c).context;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t d = 0; d < c.dim; ++d) EXPECT_NEAR(b(i, d), a(perm[i], d), 1e-12);
}

TEST(Encoder, PaddingInvarianceBothKinds) {
  for (auto kind : {EncoderKind::Transformer, EncoderKind::Conformer}) {
    auto c = tiny_encoder(kind, 2);
    ParameterSet params;
    auto rng = make_rng(15);
    init_encoder(params, c, rng);
    perturb(params, 16);
    const auto z = testing::random_values(7 * c.dim, 17);
    auto padded = z;
    for (std::size_t i = 0; i < 4 * c.dim; ++i) padded.push_back(9.0 - i * 0.1);
    const auto a = encode(Tensor::from({7, c.dim}, z), 0, {}, params, c).context;
    const auto b = encode(Tensor::from({11, c.dim}, padded), 7, {}, params, c).context;
    expect_rows_equal(a, b, 7);
  }
}

RelativePositionParams random_rel(std::size_t d, std::uint64_t seed) {
  return {random_tensor({d, d}, seed, 0.5), random_tensor({d}, seed + 1, 0.5), random_tensor({d}, seed + 2, 0.5)};
}

TEST(RelativeAttention, SingleFrameHasUnitWeight) {
  const auto q = random_tensor({1, 8}, 1), k = random_tensor({1, 8}, 2), v = random_tensor({1, 8}, 3);
  std::vector<Tensor> w;
  relative_position_attention(q, k, v, 2, 1, random_rel(8, 4), {}, &w);
  ASSERT_EQ(w.size(), 2u);
  for (const auto& h : w) EXPECT_EQ(h(0, 0), 1.0);
}

TEST(RelativeAttention, RowsSumToOneOverValidKeys) {
  const auto q = random_tensor({6, 8}, 5), k = random_tensor({6, 8}, 6), v = random_tensor({6, 8}, 7);
  std::vector<Tensor> w;
  relative_position_attention(q, k, v, 2, 4, random_rel(8, 8), {}, &w);
  for (const auto& h : w) {
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) s += h(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
      EXPECT_EQ(h(i, 4), 0.0);
      EXPECT_EQ(h(i, 5), 0.0);
    }
  }
}

TEST(RelativeAttention, ShiftingPositionsLeavesOutputUnchanged) {
  const auto q = random_tensor({4, 8}, 9), k = random_tensor({4, 8}, 10), v = random_tensor({4, 8}, 11);
  const auto rel = random_rel(8, 12);
  const auto a = relative_position_attention(q, k, v, 2, 4, rel, {0, 1, 2, 3});
  const auto b = relative_position_attention(q, k, v, 2, 4, rel, {3, 4, 5, 6});
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  const auto c = relative_position_attention(q, k, v, 2, 4, rel, {0, 2, 1, 3});
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - c.data()[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoder, BlockGradientChecks) {
  for (auto kind : {EncoderKind::Transformer, EncoderKind::Conformer}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto c = tiny_encoder(kind);
      ParameterSet params;
      auto rng = make_rng(seed);
      init_encoder(params, c, rng);
      perturb(params, seed + 20);
      const auto h = random_tensor({6, c.dim}, seed + 30, 1.0, false);
      auto loss = [&] {
        auto out = kind == EncoderKind::Transformer ? transformer_block(h, 5, params, 0, c)
                                                    : conformer_block(h, 5, params, 0, c);
        return weighted_sum(out, seed);
      };
      const auto report = gradient_check(loss, params);
      EXPECT_TRUE(report.passed) << (kind == EncoderKind::Conformer ? "conformer " : "transformer ")
                                 << report.max_rel_error;
    }
  }
}

TEST(Encoder, FullToyEncoderGradientCheck) {
  for (auto kind : {EncoderKind::Transformer, EncoderKind::Conformer}) {
    const auto c = tiny_encoder(kind, 2, 32);
    ParameterSet params;
    auto rng = make_rng(40);
    init_encoder(params, c, rng);
    perturb(params, 41, 0.1);
    const auto z = random_tensor({6, c.dim}, 42, 1.0, false);
    GradCheckOptions opts;
    opts.max_entries = 12;
    const auto report = gradient_check(
        [&] { return weighted_sum(encode(z, 6, {false, true, false, false, true, false}, params, c).context, 43); },
        params, opts);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

QuantizerConfig tiny_quantizer(std::size_t groups = 2, std::size_t entries = 4) {
  QuantizerConfig c;
  c.input_dim = 6;
  c.groups = groups;
  c.entries = entries;
  c.entry_dim = 3;
  c.output_dim = 5;
  return c;
}

TEST(Quantizer, HardModeRowsAreOneHot) {
  const auto c = tiny_quantizer();
  ParameterSet params;
  auto rng = make_rng(1);
  init_quantizer(params, c, rng);
  const auto q = quantize(random_tensor({20, 6}, 2, 1.0, false), 2.0, QuantizeMode::Hard, 3, params, c);
  EXPECT_EQ(q.targets.shape(), (Shape{20, 5}));
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t g = 0; g < 2; ++g) {
      double sum = 0.0;
      for (std::size_t v = 0; v < 4; ++v) {
        const double x = q.selection(t, g * 4 + v);
        EXPECT_TRUE(x == 0.0 || x == 1.0);
        sum += x;
        if (x == 1.0) EXPECT_EQ(q.codes[t][g], v);
      }
      EXPECT_EQ(sum, 1.0);
    }
  }
}

TEST(Quantizer, DominantLogitAlwaysWins) {
  const auto c = tiny_quantizer(1, 4);
  ParameterSet params;
  auto rng = make_rng(4);
  init_quantizer(params, c, rng);
  std::vector<double> logits(500 * 4, 0.0);
  for (std::size_t t = 0; t < 500; ++t) logits[t * 4 + 2] = 1e6;
  const auto q = quantize_logits(Tensor::from({500, 4}, logits), 0.5, QuantizeMode::Hard, 5, params, c);
  for (const auto& code : q.codes) EXPECT_EQ(code[0], 2u);
}

TEST(Quantizer, HighTemperatureApproachesUniform) {
  const auto c = tiny_quantizer(1, 4);
  ParameterSet params;
  auto rng = make_rng(6);
  init_quantizer(params, c, rng);
  const std::size_t n = 100000;
  const auto logits = testing::random_values(n * 4, 7, 3.0);
  const auto q = quantize_logits(Tensor::from({n, 4}, logits), 1e4, QuantizeMode::Soft, 8, params, c);
  double worst = 0.0;
  for (double p : q.selection.data()) worst = std::max(worst, std::abs(p - 0.25));
  EXPECT_LT(worst, 0.01);
}

TEST(Quantizer, UniformLogitCodeUsageWithinThreeSigma) {
  const std::size_t v = 8, n = 100000;
  const auto c = tiny_quantizer(1, v);
  ParameterSet params;
  auto rng = make_rng(9);
  init_quantizer(params, c, rng);
  const auto q = quantize_logits(Tensor::zeros({n, v}), 1.0, QuantizeMode::Hard, 10, params, c);
  std::vector<double> counts(v, 0.0);
  for (const auto& code : q.codes) counts[code[0]] += 1.0;
  const double p = 1.0 / v, sigma = std::sqrt(p * (1 - p) / n);
  for (double k : counts) EXPECT_LT(std::abs(k / n - p), 3 * sigma);
}

TEST(Quantizer, StraightThroughGradientEqualsSoftPath) {
  const auto c = tiny_quantizer();
  ParameterSet params;
  auto rng = make_rng(11);
  init_quantizer(params, c, rng);
  const auto logits_values = testing::random_values(7 * 8, 12);
  auto grad_of = [&](QuantizeMode mode) {
    auto logits = Tensor::from({7, 8}, logits_values, true);
    backward(weighted_sum(quantize_logits(logits, 1.5, mode, 13, params, c).selection, 14));
    return std::vector<double>(logits.grad().begin(), logits.grad().end());
  };
  const auto hard = grad_of(QuantizeMode::Hard), soft = grad_of(QuantizeMode::Soft);
  for (std::size_t i = 0; i < hard.size(); ++i) EXPECT_EQ(hard[i], soft[i]);
}

TEST(Quantizer, SoftModeGradientCheck) {
  const auto c = tiny_quantizer();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterSet params;
    auto rng = make_rng(seed);
    init_quantizer(params, c, rng);
    const auto z = random_tensor({5, 6}, seed + 50, 1.0, false);
    const auto report = gradient_check(
        [&] {
          const auto q = quantize(z, 1.3, QuantizeMode::Soft, seed, params, c);
          return ops::add(weighted_sum(q.targets, seed), diversity_loss(q.clean_probs, c.groups, c.entries));
        },
        params);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(Diversity, UniformIsZeroAndOneHotIsThreeQuarters) {
  EXPECT_EQ(diversity_loss(Tensor::full({3, 8}, 0.25), 2, 4).item(), 0.0);
  EXPECT_DOUBLE_EQ(diversity_loss(Tensor::from({2, 4}, {0, 1, 0, 0, 0, 1, 0, 0}), 1, 4).item(), 0.75);
  EXPECT_THROW(diversity_loss(Tensor::full({2, 4}, 0.3), 1, 4), QuantizerError);
}

TEST(Diversity, MatchesDirectEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t t = 6, g = 2, v = 5;
    auto raw = testing::random_values(t * g * v, seed);
    for (auto& x : raw) x = std::exp(2 * x);
    for (std::size_t r = 0; r < t * g; ++r) {
      const double s = std::accumulate(raw.begin() + r * v, raw.begin() + (r + 1) * v, 0.0);
      for (std::size_t i = 0; i < v; ++i) raw[r * v + i] /= s;
    }
    double perp = 0.0;
    for (std::size_t gi = 0; gi < g; ++gi) {
      double h = 0.0;
      for (std::size_t i = 0; i < v; ++i) {
        double a = 0.0;
        for (std::size_t r = 0; r < t; ++r) a += raw[r * g * v + gi * v + i];
        a /= t;
        h -= a * std::log(a);
      }
      perp += std::exp(h);
    }
    const auto p = Tensor::from({t, g * v}, raw);
    EXPECT_NEAR(diversity_loss(p, g, v).item(), (g * v - perp) / (g * v), 1e-10);
    EXPECT_NEAR(code_perplexity(p, g, v), perp, 1e-10);
  }
}

TEST(Diversity, GradientCheckThroughSoftmax) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterSet params;
    params.add("logits", random_tensor({4, 6}, seed));
    const auto report = gradient_check(
        [&] {
          const auto& l = params.get("logits");
          return diversity_loss(ops::concat_cols({ops::softmax_rows(ops::slice_cols(l, 0, 3)),
                                                  ops::softmax_rows(ops::slice_cols(l, 3, 3))}),
                                2, 3);
        },
        params);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(Temperature, AnnealSchedule) {
  EXPECT_EQ(anneal_temperature(0), 2.0);
  EXPECT_EQ(anneal_temperature(10000000), 0.5);
  double prev = anneal_temperature(0);
  for (std::int64_t s = 1000; s < 400000; s += 1000) {
    const double t = anneal_temperature(s);
    EXPECT_LE(t, prev);
    prev = t;
  }
  EXPECT_THROW(anneal_temperature(-1), std::invalid_argument);
}

TEST(SpanMask, ForcedSpanWhenNoStartFires) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = sample_span_mask(50, 0.0, 10, seed, true);
    ASSERT_EQ(plan.starts.size(), 1u);
    EXPECT_EQ(plan.masked_count(), std::min<std::size_t>(10, 50 - plan.starts[0]));
  }
  EXPECT_EQ(sample_span_mask(50, 0.0, 10, 1, false).masked_count(), 0u);
}

TEST(SpanMask, SpanCoveringWholeAxis) {
  const auto plan = sample_span_mask(10, 1.0, 10, 3);
  EXPECT_EQ(plan.starts.front(), 0u);
  EXPECT_EQ(plan.masked_count(), 10u);
}

TEST(SpanMask, MonteCarloFractionMatchesClosedForm) {
  const double expected = expected_mask_fraction(10000, 0.065, 10);
  EXPECT_NEAR(expected, 1.0 - std::pow(1.0 - 0.065, 10), 1e-3);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    total += static_cast<double>(sample_span_mask(10000, 0.065, 10, seed).masked_count()) / 10000.0;
  EXPECT_NEAR(total / 20.0, expected, 0.02);
  EXPECT_NEAR(total / 20.0, 0.49, 0.02);
}

TEST(Model, ToyConfigsInitialize) {
  for (auto f : {FrontendKind::Wav, FrontendKind::Fbank}) {
    for (auto e : {EncoderKind::Transformer, EncoderKind::Conformer}) {
      const auto c = ModelConfig::toy(f, e);
      const auto p = init_pretrain_model(c, 1);
      EXPECT_TRUE(p.contains("pretrain.final_proj.weight"));
      EXPECT_TRUE(p.contains("encoder.mask_emb"));
      const auto ft = init_finetune_model(c, 6, 1);
      EXPECT_EQ(ft.get("ctc_head.weight").shape(), (Shape{6, 64}));
      EXPECT_FALSE(ft.contains("quantizer.codebook"));
      // Same seed gives the same frontend and encoder in both models.
      EXPECT_TRUE(select_parameters(p, {"frontend.", "encoder."})
                      .bitwise_equal(select_parameters(ft, {"frontend.", "encoder."})));
    }
  }
}

}  // namespace
}  // namespace w2vj
