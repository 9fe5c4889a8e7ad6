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

#include "w2vj/oracles.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <stdexcept>

#include "w2vj/ctc.hpp"
#include "w2vj/encoder.hpp"
#include "w2vj/frontend.hpp"
#include "w2vj/gradcheck.hpp"
#include "w2vj/ops.hpp"
#include "w2vj/pretrain.hpp"
#include "w2vj/quantizer.hpp"
#include "w2vj/rng.hpp"

namespace w2vj {

namespace {

std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  auto rng = make_rng(seed, 0x6f72);
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

Tensor input(const Shape& shape, std::uint64_t seed, double scale = 1.0) {
  return Tensor::from(shape, uniform_values(shape_numel(shape), seed, scale));
}

// sum(x * r) for fixed random r, so every output entry reaches the gradient.
Tensor probe(const Tensor& x, std::uint64_t seed) {
  return ops::sum(ops::mul_const(x, uniform_values(x.numel(), seed ^ 0x5eed)));
}

// Zero-initialized biases and norm affines would hide bugs; move every entry off its init.
void perturb(ParameterSet& params, std::uint64_t seed, double scale = 0.3) {
  std::uint64_t k = 0;
  for (auto& [name, t] : params.entries()) {
    const auto noise = uniform_values(t.numel(), hash_key({seed, k++}), scale);
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += noise[i];
  }
}

EncoderConfig small_encoder(EncoderKind kind) {
  EncoderConfig c;
  c.kind = kind;
  c.blocks = 1;
  c.dim = 8;
  c.heads = 2;
  c.ffn_dim = 12;
  c.conv_kernel = 3;
  c.pos_conv_kernel = 4;
  c.pos_conv_groups = 2;
  c.dropout = 0.0;
  return c;
}

GradCheckReport check_frontend(FrontendKind kind, std::uint64_t seed) {
  FrontendConfig c;
  if (kind == FrontendKind::Fbank) {
    c = FrontendConfig::fbank(6, 4);
    c.input_dim = 8;
  } else {
    c.kind = FrontendKind::Wav;
    c.input_dim = 1;
    c.output_dim = 5;
    c.layers = {{4, 4, 2}, {4, 3, 2}};
  }
  ParameterSet params;
  auto rng = make_rng(seed);
  init_frontend(params, c, rng);
  perturb(params, seed);
  const auto x = input({kind == FrontendKind::Wav ? 30u : 11u, c.input_dim}, seed + 100);
  return gradient_check([&] { return probe(run_frontend(x, params, c).states, seed); }, params);
}

GradCheckReport check_block(EncoderKind kind, std::uint64_t seed) {
  const auto c = small_encoder(kind);
  ParameterSet params;
  auto rng = make_rng(seed);
  init_encoder(params, c, rng);
  perturb(params, seed + 20);
  const auto h = input({6, c.dim}, seed + 30);
  return gradient_check(
      [&] {
        return probe(kind == EncoderKind::Transformer ? transformer_block(h, 5, params, 0, c)
                                                      : conformer_block(h, 5, params, 0, c),
                     seed);
      },
      params);
}

GradCheckReport check_quantizer(std::uint64_t seed) {
  QuantizerConfig c;
  c.input_dim = 6;
  c.groups = 2;
  c.entries = 4;
  c.entry_dim = 3;
  c.output_dim = 5;
  ParameterSet params;
  auto rng = make_rng(seed);
  init_quantizer(params, c, rng);
  params.add("z", input({5, 6}, seed + 50));
  // Soft mode with fixed noise: the hard forward is piecewise constant.
  return gradient_check(
      [&] {
        const auto q = quantize(params.get("z"), 1.3, QuantizeMode::Soft, seed, params, c);
        return ops::add(probe(q.targets, seed), diversity_loss(q.clean_probs, c.groups, c.entries));
      },
      params);
}

GradCheckReport check_contrastive(std::uint64_t seed) {
  ParameterSet params;
  params.add("c", input({8, 5}, seed));
  params.add("q", input({8, 5}, seed + 50));
  auto plan = sample_mask(8, 0.4, 2, seed);
  if (plan.masked_count() < 2) plan.mask.assign(8, true);
  return gradient_check([&] { return contrastive_loss(params.get("c"), params.get("q"), plan, 4, 0.1, seed).loss; },
                        params);
}

GradCheckReport check_ctc(std::uint64_t seed) {
  ParameterSet params;
  params.add("logits", input({7, 4}, seed, 2.0));
  const std::vector<std::size_t> target{1, 3, 3};
  return gradient_check([&] { return ctc_loss(params.get("logits"), target); }, params);
}

// Complete pretraining objective (frontend, encoder, quantizer, projection,
// contrastive and diversity terms) on a reduced-width model.
GradCheckReport check_toy_model(std::uint64_t seed) {
  auto cfg = PretrainConfig::toy(FrontendKind::Fbank, EncoderKind::Conformer);
  cfg.model.frontend = FrontendConfig::fbank(16, 4);
  cfg.model.encoder.dim = cfg.model.quantizer.input_dim = 16;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.ffn_dim = 24;
  cfg.model.encoder.conv_kernel = 5;
  cfg.model.quantizer.entries = 4;
  cfg.model.quantizer.entry_dim = 4;
  cfg.model.quantizer.output_dim = 8;
  cfg.distractors = 5;
  cfg.mask_start_prob = 0.3;
  cfg.frontend_grad_scale = 1.0;
  cfg.quantize_mode = QuantizeMode::Soft;
  cfg.seed = seed;
  auto params = init_pretrain_model(cfg.model, seed);
  perturb(params, seed + 7, 0.05);
  Utterance utt;
  utt.id = "oracle";
  utt.length = 48;
  utt.input = input({48, kNumMelBins}, seed + 200);
  const std::vector<Utterance> corpus{utt};
  GradCheckOptions opt;
  opt.max_entries = 6;
  opt.seed = seed;
  return gradient_check([&] { return pretrain_forward(corpus, {0}, params, cfg, seed).loss; }, params, opt);
}

GradCheckReport run_component(const std::string& name, std::uint64_t seed) {
  if (name == "fbank_frontend") return check_frontend(FrontendKind::Fbank, seed);
  if (name == "wav_frontend") return check_frontend(FrontendKind::Wav, seed);
  if (name == "transformer_block") return check_block(EncoderKind::Transformer, seed);
  if (name == "conformer_block") return check_block(EncoderKind::Conformer, seed);
  if (name == "quantizer") return check_quantizer(seed);
  if (name == "contrastive") return check_contrastive(seed);
  if (name == "ctc") return check_ctc(seed);
  if (name == "toy_model") return check_toy_model(seed);
  throw std::invalid_argument("unknown gradient oracle component: " + name);
}

}  // namespace

const std::vector<std::string>& gradient_oracle_components() {
  static const std::vector<std::string> names{"fbank_frontend", "wav_frontend", "transformer_block", "conformer_block",
                                              "quantizer",      "contrastive",  "ctc",               "toy_model"};
  return names;
}

std::vector<GradientOracleResult> run_gradient_oracles(std::size_t seeds, std::uint64_t base_seed,
                                                       const std::vector<std::string>& only) {
  std::vector<GradientOracleResult> out;
  for (const auto& name : only.empty() ? gradient_oracle_components() : only) {
    GradientOracleResult r;
    r.component = name;
    r.seeds = seeds;
    r.passed = true;
    for (std::uint64_t s = base_seed; s < base_seed + seeds; ++s) {
      const auto report = run_component(name, s);
      r.max_rel_error = std::max(r.max_rel_error, report.max_rel_error);
      r.passed = r.passed && report.passed;
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace w2vj
