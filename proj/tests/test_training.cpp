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
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "w2vj/checkpoint.hpp"
#include "w2vj/finetune.hpp"
#include "w2vj/gradcheck.hpp"
#include "w2vj/pretrain.hpp"

namespace w2vj {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("w2vj_train_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const Vocabulary& tones() {
  static const Vocabulary v({"a", "b", "c", "d", "e"});
  return v;
}

// Shared 8-utterance tone corpus, generated once per process.
const fs::path& corpus_dir() {
  static const fs::path dir = [] {
    auto d = scratch("corpus");
    generate_synthetic_corpus(8, tones(), 11, d);
    return d;
  }();
  return dir;
}

std::vector<Utterance> load_corpus(FrontendKind kind, bool with_targets = false) {
  const auto entries = load_manifest(corpus_dir() / "train.tsv");
  InputOptions io;
  io.kind = kind;
  if (kind == FrontendKind::Fbank) io.cmvn = estimate_manifest_cmvn(entries);
  if (with_targets) io.vocab = &tones();
  return load_utterances(entries, io);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Brute-force contrastive loss with an explicit softmax per masked frame.
double contrastive_oracle(const std::vector<double>& c, const std::vector<double>& q, std::size_t d,
                          const std::vector<std::size_t>& idx, const std::vector<std::vector<std::size_t>>& cand,
                          double kappa) {
  auto cosine = [&](std::size_t a, std::size_t b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += c[a * d + k] * q[b * d + k];
      na += c[a * d + k] * c[a * d + k];
      nb += q[b * d + k] * q[b * d + k];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  double total = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    double denom = 0;
    for (auto j : cand[i]) denom += std::exp(cosine(idx[i], idx[j]) / kappa);
    total += -std::log(std::exp(cosine(idx[i], idx[cand[i][0]]) / kappa) / denom);
  }
  return total / static_cast<double>(idx.size());
}

TEST(PretrainMask, ZeroProbabilityForcesOneSpan) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = sample_mask(50, 0.0, 10, seed);
    ASSERT_EQ(plan.starts.size(), 1u);
    EXPECT_GE(plan.masked_count(), 1u);
    EXPECT_LE(plan.masked_count(), 10u);
  }
}

TEST(PretrainMask, SpanFromZeroCoversEverything) {
  const auto plan = sample_mask(10, 1.0, 10, 3);
  EXPECT_EQ(plan.masked_count(), 10u);
}

TEST(Distractors, ComeFromOtherMaskedFrames) {
  const auto plan = sample_mask(200, 0.065, 10, 5);
  const auto m = plan.masked_count();
  const auto cand = sample_distractors(plan, 100, 9);
  ASSERT_EQ(cand.size(), m);
  for (std::size_t i = 0; i < m; ++i) {
    ASSERT_EQ(cand[i].size(), 101u);
    EXPECT_EQ(cand[i][0], i);
    for (std::size_t j = 1; j < cand[i].size(); ++j) {
      EXPECT_NE(cand[i][j], i);
      EXPECT_LT(cand[i][j], m);
    }
  }
  EXPECT_EQ(cand, sample_distractors(plan, 100, 9));
  EXPECT_TRUE(sample_distractors(sample_mask(1, 0.0, 10, 0), 5, 0).empty());
}

TEST(Distractors, CoverOtherFramesUniformly) {
  MaskPlan plan;
  plan.mask.assign(5, true);
  std::vector<double> counts(5, 0.0);
  const std::size_t k = 40000;
  const auto cand = sample_distractors(plan, k, 1);
  for (auto j : cand[2]) counts[j] += 1.0;
  counts[2] -= 1.0;  // the positive
  EXPECT_EQ(counts[2], 0.0);
  const double p = 0.25, sigma = std::sqrt(k * p * (1 - p));
  for (std::size_t j : {0, 1, 3, 4}) EXPECT_NEAR(counts[j], k * p, 3 * sigma);
}

TEST(Contrastive, ClosedFormOneVersusHundredOrthogonal) {
  const auto c = Tensor::from({1, 2}, {1.0, 0.0});
  const auto q = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 1.0});
  std::vector<std::vector<std::size_t>> cand{{0}};
  cand[0].resize(101, 1);
  cand[0][0] = 0;
  const double expected = std::log1p(100.0 * std::exp(-10.0));
  EXPECT_NEAR(contrastive_candidates_loss(c, q, cand, 0.1).item(), expected, 1e-9);
  EXPECT_NEAR(expected, 4.53e-3, 1e-5);
}

TEST(Contrastive, IdenticalCandidatesGiveLogKPlusOne) {
  const auto c = testing::random_tensor({6, 4}, 1, 1.0, false);
  std::vector<std::vector<std::size_t>> cand(6, std::vector<std::size_t>(11, 0));
  for (std::size_t i = 0; i < 6; ++i) cand[i].assign(11, i);
  EXPECT_NEAR(contrastive_candidates_loss(c, c, cand, 0.1).item(), std::log(11.0), 1e-12);
}

TEST(Contrastive, MatchesExplicitSoftmaxOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t t = 8, d = 5;
    const auto cv = testing::random_values(t * d, seed);
    const auto qv = testing::random_values(t * d, seed + 100);
    auto plan = sample_mask(t, 0.3, 3, seed);
    if (plan.masked_count() < 2) plan.mask.assign(t, true);
    const auto out = contrastive_loss(Tensor::from({t, d}, cv), Tensor::from({t, d}, qv), plan, 3, 0.1, seed);
    ASSERT_FALSE(out.skipped);
    const double oracle = contrastive_oracle(cv, qv, d, plan.masked_indices(), sample_distractors(plan, 3, seed), 0.1);
    EXPECT_NEAR(out.loss.item(), oracle, 1e-10);
  }
}

TEST(Contrastive, SkipsWithFewerThanTwoMaskedFrames) {
  MaskPlan plan;
  plan.mask = {false, true, false};
  const auto out = contrastive_loss(Tensor::zeros({3, 2}), Tensor::zeros({3, 2}), plan, 5, 0.1, 0);
  EXPECT_TRUE(out.skipped);
  EXPECT_EQ(out.masked_frames, 1u);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ParameterSet params;
    params.add("c", testing::random_tensor({6, 4}, seed));
    params.add("q", testing::random_tensor({6, 4}, seed + 50));
    const auto plan = sample_mask(6, 0.5, 2, seed);
    const auto report = gradient_check(
        [&] { return contrastive_loss(params.get("c"), params.get("q"), plan, 4, 0.1, seed).loss; }, params);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

PretrainConfig tiny_pretrain() {
  auto cfg = PretrainConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer);
  cfg.log_wall_time = false;
  return cfg;
}

TEST(PretrainStep, QuantizerTargetsIgnoreMasking) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  const auto cfg = tiny_pretrain();
  const auto params = init_pretrain_model(cfg.model, 1);
  const auto latent = run_frontend(corpus[0].input, params, cfg.model.frontend);
  const auto before = quantize(latent.states, 2.0, QuantizeMode::Hard, 7, params, cfg.model.quantizer);
  const auto plan = sample_mask(latent.true_length, 0.3, 5, 2);
  encode(latent.states, latent.true_length, plan.mask, params, cfg.model.encoder);
  const auto after = quantize(latent.states, 2.0, QuantizeMode::Hard, 7, params, cfg.model.quantizer);
  EXPECT_TRUE(std::equal(before.targets.data().begin(), before.targets.data().end(), after.targets.data().begin()));
}

TEST(PretrainStep, LossIgnoresMemberOrder) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  const auto cfg = tiny_pretrain();
  const auto params = init_pretrain_model(cfg.model, 1);
  const auto a = pretrain_forward(corpus, {3, 0, 5}, params, cfg, 4);
  const auto b = pretrain_forward(corpus, {0, 5, 3}, params, cfg, 4);
  EXPECT_EQ(a.loss.item(), b.loss.item());
}

TEST(PretrainStep, ZeroLearningRateKeepsParameters) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  auto cfg = tiny_pretrain();
  cfg.schedule.peak = 0.0;
  auto params = init_pretrain_model(cfg.model, 2);
  const auto before = params.clone();
  AdamState adam;
  for (int i = 0; i < 3; ++i) pretrain_step(corpus, {0, 1}, params, adam, cfg);
  EXPECT_TRUE(params.bitwise_equal(before));
}

TEST(PretrainStep, NonFiniteLossIsReported) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  const auto cfg = tiny_pretrain();
  auto params = init_pretrain_model(cfg.model, 2);
  params.get("pretrain.final_proj.bias").mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState adam;
  try {
    pretrain_step(corpus, {0}, params, adam, cfg);
    FAIL();
  } catch (const PretrainError& e) {
    EXPECT_NE(std::string(e.what()).find("pretrain.final_proj.bias"), std::string::npos);
  }
}

TEST(PretrainStep, ToyModelGradientMatchesFiniteDifferences) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  auto cfg = tiny_pretrain();
  cfg.model.encoder.dim = cfg.model.frontend.output_dim = cfg.model.quantizer.input_dim = 16;
  cfg.model.encoder.ffn_dim = 24;
  cfg.model.encoder.heads = 2;
  cfg.model.frontend = FrontendConfig::fbank(16, 4);
  cfg.model.quantizer.entries = 4;
  cfg.model.quantizer.entry_dim = 4;
  cfg.model.quantizer.output_dim = 8;
  cfg.distractors = 5;
  cfg.mask_start_prob = 0.3;
  cfg.frontend_grad_scale = 1.0;  // the 0.1 scale is checked separately
  cfg.quantize_mode = QuantizeMode::Soft;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto params = init_pretrain_model(cfg.model, seed);
    GradCheckOptions opt;
    opt.max_entries = 6;
    opt.seed = seed;
    const auto report = gradient_check([&] { return pretrain_forward(corpus, {1}, params, cfg, seed).loss; }, params, opt);
    EXPECT_TRUE(report.passed) << "seed " << seed << " max rel err " << report.max_rel_error;
  }
}

TEST(PretrainStep, FrontendGradientIsScaled) {
  const auto corpus = load_corpus(FrontendKind::Fbank);
  auto cfg = tiny_pretrain();
  std::map<std::string, std::vector<double>> grads[2];
  for (int run = 0; run < 2; ++run) {
    cfg.frontend_grad_scale = run == 0 ? 1.0 : 0.1;
    auto params = init_pretrain_model(cfg.model, 3);
    ensure_grads(params);
    backward(pretrain_forward(corpus, {2}, params, cfg, 0).loss);
    for (const auto& [name, t] : params) grads[run][name].assign(t.grad().begin(), t.grad().end());
  }
  for (const auto& [name, g] : grads[0]) {
    const double s = name.rfind("frontend.", 0) == 0 ? 0.1 : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(grads[1][name][i], s * g[i], 1e-12 * (1 + std::abs(g[i]))) << name;
  }
}

TEST(PretrainRun, EmptyManifestIsAnError) {
  const auto dir = scratch("pt_empty");
  write_manifest(dir / "empty.tsv", {});
  EXPECT_THROW(run_pretraining(dir / "empty.tsv", tiny_pretrain(), dir / "out"), PretrainError);
}

TEST(PretrainRun, SameSeedGivesIdenticalLogs) {
  auto cfg = tiny_pretrain();
  cfg.max_steps = 10;
  cfg.schedule.total_steps = 10;
  const auto a = scratch("pt_det_a"), b = scratch("pt_det_b");
  run_pretraining(corpus_dir() / "train.tsv", cfg, a);
  run_pretraining(corpus_dir() / "train.tsv", cfg, b);
  const auto la = read_text(a / "pretrain_log.jsonl");
  EXPECT_FALSE(la.empty());
  EXPECT_EQ(la, read_text(b / "pretrain_log.jsonl"));
  EXPECT_TRUE(load_checkpoint(a / "pretrain_final.w2vj").params.bitwise_equal(load_checkpoint(b / "pretrain_final.w2vj").params));
}

TEST(PretrainRun, ResumeMatchesUninterruptedRun) {
  auto cfg = tiny_pretrain();
  cfg.max_steps = 40;
  cfg.schedule.total_steps = 40;
  cfg.checkpoint_every = 7;
  const auto whole = scratch("pt_whole"), split = scratch("pt_split");
  run_pretraining(corpus_dir() / "train.tsv", cfg, whole);
  auto first = cfg;
  first.stop_at_step = 20;
  const auto r1 = run_pretraining(corpus_dir() / "train.tsv", first, split);
  EXPECT_EQ(r1.metrics.size(), 20u);
  EXPECT_FALSE(fs::exists(split / "pretrain_final.w2vj"));
  const auto r2 = run_pretraining(corpus_dir() / "train.tsv", cfg, split);
  EXPECT_EQ(r2.metrics.front().step, 21u);
  EXPECT_TRUE(load_checkpoint(whole / "pretrain_final.w2vj").params.bitwise_equal(load_checkpoint(split / "pretrain_final.w2vj").params));
  EXPECT_EQ(read_text(whole / "pretrain_log.jsonl"), read_text(split / "pretrain_log.jsonl"));
}

TEST(PretrainRun, BothFrontendsCompleteASmokeRun) {
  for (auto kind : {FrontendKind::Wav, FrontendKind::Fbank}) {
    auto cfg = PretrainConfig::toy(kind, EncoderKind::Conformer);
    cfg.max_steps = 20;
    cfg.schedule.total_steps = 20;
    const auto dir = scratch(kind == FrontendKind::Wav ? "pt_smoke_wav" : "pt_smoke_fbank");
    const auto r = run_pretraining(corpus_dir() / "train.tsv", cfg, dir);
    EXPECT_EQ(r.metrics.size(), 20u);
    for (const auto& m : r.metrics) EXPECT_TRUE(std::isfinite(m.loss));
    EXPECT_TRUE(fs::exists(r.final_checkpoint));
  }
}

TEST(FinetuneConfig, DefaultMaskingConstants) {
  const MaskingConfig m;
  EXPECT_EQ(m.post_time.span, 10u);
  EXPECT_EQ(m.post_time.probability, 0.5);
  EXPECT_EQ(m.post_channel.span, 64u);
  EXPECT_EQ(m.post_channel.probability, 0.1);
  EXPECT_EQ(m.pre_time.span, 20u);
  EXPECT_EQ(m.pre_time.probability, 0.65);
  EXPECT_EQ(m.pre_spectral.span, 30u);
  EXPECT_EQ(m.pre_spectral.probability, 0.1);
  const FinetuneConfig f;
  EXPECT_EQ(f.max_steps, 80000);
  EXPECT_EQ(f.schedule.peak, 3e-5);
  EXPECT_EQ(f.eval_every, 1600);
  EXPECT_EQ(f.keep_top, 5u);
}

TEST(FinetuneConfig, PreCnnNeedsFbank) {
  auto cfg = FinetuneConfig::toy(FrontendKind::Wav, EncoderKind::Transformer, MaskPosition::Pre);
  EXPECT_THROW(cfg.validate(), FinetuneError);
}

TEST(FinetuneConfig, EvaluationCount) {
  EXPECT_EQ(count_evaluations(8000, 1600), 5);
  EXPECT_EQ(count_evaluations(80000, 6400), 12);
  EXPECT_EQ(count_evaluations(1599, 1600), 0);
}

TEST(PreCnnMasking, ZeroProbabilityIsIdentity) {
  MaskingConfig cfg;
  cfg.pre_time.probability = 0.0;
  cfg.pre_spectral.probability = 0.0;
  const auto x = testing::random_tensor({50, 80}, 3, 1.0, false);
  const auto out = apply_pre_cnn_masking(x, cfg, 1);
  EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), out.features.data().begin()));
}

TEST(PreCnnMasking, MaskedCellsAreZeroAndOthersUntouched) {
  const auto x = testing::random_tensor({300, 80}, 4, 1.0, false);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = apply_pre_cnn_masking(x, MaskingConfig{}, seed);
    for (std::size_t t = 0; t < 300; ++t)
      for (std::size_t f = 0; f < 80; ++f) {
        const bool masked = out.time.mask[t] || out.spectral.mask[f];
        EXPECT_EQ(out.features(t, f), masked ? 0.0 : x(t, f));
      }
  }
}

TEST(PreCnnMasking, WholeAxisSpan) {
  const auto plan = sample_span_mask(15, 0.0, 20, 8, true);
  EXPECT_EQ(plan.masked_count() > 0, true);
  const auto full = sample_span_mask(15, 1.0, 20, 8);
  EXPECT_EQ(full.masked_count(), 15u);
}

TEST(PreCnnMasking, MonteCarloMatchesClosedForm) {
  const MaskingConfig cfg;
  const std::size_t t = 10000;
  double time_frac = 0.0, spec_frac = 0.0;
  const int draws = 200;
  for (int s = 0; s < draws; ++s) {
    time_frac += sample_span_mask(t, cfg.pre_time.start_prob(), cfg.pre_time.span, s).masked_count() / double(t);
    spec_frac += sample_span_mask(80, cfg.pre_spectral.start_prob(), cfg.pre_spectral.span, s).masked_count() / 80.0;
  }
  EXPECT_NEAR(time_frac / draws, expected_mask_fraction(t, cfg.pre_time.start_prob(), cfg.pre_time.span), 0.02);
  EXPECT_NEAR(spec_frac / draws, expected_mask_fraction(80, cfg.pre_spectral.start_prob(), cfg.pre_spectral.span), 0.02);
}

ParameterSet params_with_mask_emb(std::size_t dim) {
  ParameterSet p;
  p.add("encoder.mask_emb", testing::random_tensor({dim}, 77));
  return p;
}

TEST(PostCnnMasking, ZeroProbabilityIsIdentity) {
  MaskingConfig cfg;
  cfg.post_time.probability = 0.0;
  cfg.post_channel.probability = 0.0;
  const LatentSequence z{testing::random_tensor({30, 64}, 5, 1.0, false), 30};
  const auto out = apply_post_cnn_masking(z, cfg, params_with_mask_emb(64), 3);
  EXPECT_TRUE(std::equal(z.states.data().begin(), z.states.data().end(), out.latent.states.data().begin()));
}

TEST(PostCnnMasking, TimeFramesBecomeTheMaskEmbedding) {
  MaskingConfig cfg;
  cfg.post_channel.probability = 0.0;
  const auto params = params_with_mask_emb(16);
  const LatentSequence z{testing::random_tensor({200, 16}, 6, 1.0, false), 200};
  const auto out = apply_post_cnn_masking(z, cfg, params, 4);
  ASSERT_GT(out.time.masked_count(), 0u);
  const auto emb = params.get("encoder.mask_emb").data();
  for (std::size_t t = 0; t < 200; ++t)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(out.latent.states(t, c), out.time.mask[t] ? emb[c] : z.states(t, c));
}

TEST(PostCnnMasking, ChannelSpanFromZeroClearsFirst64Dims) {
  MaskingConfig cfg;
  cfg.post_time.probability = 0.0;
  cfg.post_channel.probability = 1.0;
  const LatentSequence z{testing::random_tensor({12, 768}, 7, 1.0, false), 12};
  std::uint64_t seed = 0;
  PostCnnMasks out;
  for (;; ++seed) {
    out = apply_post_cnn_masking(z, cfg, params_with_mask_emb(768), seed);
    if (!out.channel.starts.empty() && out.channel.starts.front() == 0) break;
  }
  for (std::size_t t = 0; t < 12; ++t) {
    for (std::size_t c = 0; c < 64; ++c) EXPECT_EQ(out.latent.states(t, c), 0.0);
    for (std::size_t c = 64; c < 768; ++c)
      EXPECT_EQ(out.latent.states(t, c), out.channel.mask[c] ? 0.0 : z.states(t, c));
  }
}

TEST(PostCnnMasking, MonteCarloMatchesClosedForm) {
  const MaskingConfig cfg;
  double time_frac = 0.0, chan_frac = 0.0;
  const int draws = 200;
  for (int s = 0; s < draws; ++s) {
    time_frac += sample_span_mask(10000, cfg.post_time.start_prob(), cfg.post_time.span, s).masked_count() / 1e4;
    chan_frac += sample_span_mask(768, cfg.post_channel.start_prob(), cfg.post_channel.span, s).masked_count() / 768.0;
  }
  EXPECT_NEAR(time_frac / draws, expected_mask_fraction(10000, cfg.post_time.start_prob(), cfg.post_time.span), 0.02);
  EXPECT_NEAR(chan_frac / draws, expected_mask_fraction(768, cfg.post_channel.start_prob(), cfg.post_channel.span), 0.02);
}

bool frontend_equal(const ParameterSet& a, const ParameterSet& b) {
  return select_parameters(a, {"frontend."}).bitwise_equal(select_parameters(b, {"frontend."}));
}

TEST(FinetuneStep, FrontendFrozenExactlyWhenPostCnn) {
  const auto corpus = load_corpus(FrontendKind::Fbank, true);
  for (auto pos : {MaskPosition::Post, MaskPosition::Pre}) {
    const auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Conformer, pos);
    auto params = init_finetune_model(cfg.model, tones().size(), 3);
    const auto before = params.clone();
    AdamState adam;
    for (int i = 0; i < 3; ++i) finetune_step(corpus, {0, 2}, params, adam, cfg);
    if (pos == MaskPosition::Post) {
      EXPECT_TRUE(frontend_equal(params, before));
      for (const auto& [name, t] : params) {
        if (name.rfind("frontend.", 0) != 0) continue;
        EXPECT_FALSE(t.requires_grad()) << name;
        if (t.has_grad())
          for (double g : t.grad()) EXPECT_EQ(g, 0.0);
      }
    } else {
      EXPECT_FALSE(frontend_equal(params, before));
    }
    EXPECT_FALSE(select_parameters(params, {"encoder."}).bitwise_equal(select_parameters(before, {"encoder."})));
  }
}

TEST(FinetuneStep, SameSeedIsDeterministic) {
  const auto corpus = load_corpus(FrontendKind::Fbank, true);
  const auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer, MaskPosition::Pre);
  std::vector<double> losses[2];
  for (auto& run : losses) {
    auto params = init_finetune_model(cfg.model, tones().size(), 4);
    AdamState adam;
    for (std::size_t i = 0; i < 10; ++i) run.push_back(finetune_step(corpus, {i % 8, (i + 3) % 8}, params, adam, cfg).loss);
  }
  EXPECT_EQ(losses[0], losses[1]);
}

TEST(FinetuneStep, InadmissibleUtterancesAreSkipped) {
  auto corpus = load_corpus(FrontendKind::Fbank, true);
  corpus[1].target.assign(500, 1);
  const auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer, MaskPosition::Post);
  auto params = init_finetune_model(cfg.model, tones().size(), 4);
  AdamState adam;
  const auto m = finetune_step(corpus, {0, 1}, params, adam, cfg);
  EXPECT_EQ(m.skipped, 1u);
  EXPECT_EQ(m.utterances, 1u);
}

TEST(Evaluate, IsRepeatableAndUnmasked) {
  const auto corpus = load_corpus(FrontendKind::Fbank, true);
  const auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Conformer, MaskPosition::Post);
  const auto params = init_finetune_model(cfg.model, tones().size(), 5);
  const auto a = evaluate(corpus, params, cfg, tones());
  const auto b = evaluate(corpus, params, cfg, tones());
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.hypotheses, b.hypotheses);
}

TEST(PretrainedInit, CopiesFrontendAndEncoderOnly) {
  const auto dir = scratch("pt_init");
  const auto cfg = tiny_pretrain();
  const auto pre = init_pretrain_model(cfg.model, 9);
  save_checkpoint(dir / "p.w2vj", pre, {});
  auto ft = init_finetune_model(cfg.model, 6, 10);
  const auto head = select_parameters(ft, {"ctc_head."}).clone();
  load_pretrained_encoder(ft, dir / "p.w2vj");
  EXPECT_TRUE(select_parameters(ft, {"frontend.", "encoder."}).bitwise_equal(select_parameters(pre, {"frontend.", "encoder."})));
  EXPECT_TRUE(select_parameters(ft, {"ctc_head."}).bitwise_equal(head));
}

TEST(FinetuneRun, CadenceTopKAndAveraging) {
  const auto dir = scratch("ft_run");
  auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer, MaskPosition::Post);
  cfg.max_steps = 60;
  cfg.schedule.total_steps = 60;
  cfg.eval_every = 10;
  cfg.keep_top = 3;
  cfg.log_wall_time = false;
  FinetuneInputs in{corpus_dir() / "train.tsv", corpus_dir() / "train.tsv"};
  const auto r = run_finetuning(in, cfg, dir);
  ASSERT_EQ(r.evaluations.size(), static_cast<std::size_t>(count_evaluations(60, 10)));
  const auto index = read_top_k_index(dir / "topk");
  ASSERT_EQ(index.size(), 3u);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.evaluations) best = std::min(best, e.dev_loss);
  EXPECT_EQ(index.front().dev_metric, best);
  EXPECT_LE(r.averaged_dev_loss, 1.2 * best);
  const auto report = nlohmann::json::parse(read_text(r.report));
  EXPECT_EQ(report.at("evaluations").size(), 6u);
  EXPECT_EQ(report.at("averaged_model").get<std::string>(), r.averaged_model.string());
}

TEST(FinetuneRun, KeepTopOneReturnsBestCheckpoint) {
  const auto dir = scratch("ft_top1");
  auto cfg = FinetuneConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer, MaskPosition::Pre);
  cfg.max_steps = 30;
  cfg.schedule.total_steps = 30;
  cfg.eval_every = 10;
  cfg.keep_top = 1;
  FinetuneInputs in{corpus_dir() / "train.tsv", corpus_dir() / "train.tsv"};
  const auto r = run_finetuning(in, cfg, dir);
  const auto index = read_top_k_index(dir / "topk");
  ASSERT_EQ(index.size(), 1u);
  EXPECT_TRUE(load_checkpoint(r.averaged_model).params.bitwise_equal(load_checkpoint(dir / "topk" / index[0].path).params));
}

}  // namespace
}  // namespace w2vj
