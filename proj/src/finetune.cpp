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

#include "w2vj/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "w2vj/checkpoint.hpp"
#include "w2vj/ctc.hpp"
#include "w2vj/nn.hpp"
#include "w2vj/ops.hpp"
#include "w2vj/pretrain.hpp"
#include "w2vj/rng.hpp"

namespace w2vj {
namespace fs = std::filesystem;

void MaskingConfig::validate() const {
  post_time.validate("post-CNN time mask");
  post_channel.validate("post-CNN channel mask");
  pre_time.validate("pre-CNN time mask");
  pre_spectral.validate("pre-CNN spectral mask");
}

FinetuneConfig FinetuneConfig::toy(FrontendKind frontend, EncoderKind encoder, MaskPosition position) {
  FinetuneConfig c;
  c.model = ModelConfig::toy(frontend, encoder);
  c.masking.position = position;
  c.max_steps = 400;
  c.schedule = LrSchedule::tri_stage(2e-3, c.max_steps);
  c.eval_every = 25;
  c.batch_seconds = 4.0;
  return c;
}

void FinetuneConfig::validate() const {
  model.validate();
  masking.validate();
  if (masking.position == MaskPosition::Pre && model.frontend.kind != FrontendKind::Fbank)
    throw FinetuneError("finetune: pre-CNN masking needs the FBANK frontend");
  if (max_steps <= 0) throw FinetuneError("finetune: max_steps must be positive");
  if (eval_every <= 0 || eval_every > max_steps) throw FinetuneError("finetune: eval_every must be in [1, max_steps]");
  if (keep_top == 0) throw FinetuneError("finetune: keep_top must be positive");
  if (!(batch_seconds > 0.0)) throw FinetuneError("finetune: batch_seconds must be positive");
}

bool is_evaluation_step(std::uint64_t step, std::int64_t eval_every) {
  return eval_every > 0 && step > 0 && step % static_cast<std::uint64_t>(eval_every) == 0;
}

std::int64_t count_evaluations(std::int64_t max_steps, std::int64_t eval_every) {
  if (eval_every <= 0) throw FinetuneError("eval_every must be positive");
  return max_steps <= 0 ? 0 : max_steps / eval_every;
}

PreCnnMasks apply_pre_cnn_masking(const Tensor& features, const MaskingConfig& config, std::uint64_t seed) {
  if (features.rank() != 2) throw FinetuneError("pre-CNN masking: features must be [T, F]");
  const std::size_t t = features.dim(0), f = features.dim(1);
  PreCnnMasks out;
  out.time = sample_span_mask(t, config.pre_time.start_prob(), config.pre_time.span, hash_key({seed, 1}));
  out.spectral = sample_span_mask(f, config.pre_spectral.start_prob(), config.pre_spectral.span, hash_key({seed, 2}));
  if (out.time.starts.empty() && out.spectral.starts.empty()) {
    out.features = features;
    return out;
  }
  std::vector<double> keep(t * f, 1.0);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = 0; c < f; ++c)
      if (out.time.mask[r] || out.spectral.mask[c]) keep[r * f + c] = 0.0;
  out.features = ops::mul_const(features, keep);
  return out;
}

PostCnnMasks apply_post_cnn_masking(const LatentSequence& latent, const MaskingConfig& config,
                                    const ParameterSet& params, std::uint64_t seed) {
  const auto& z = latent.states;
  const std::size_t rows = z.dim(0), dim = z.dim(1);
  PostCnnMasks out;
  out.latent = latent;
  out.time = sample_span_mask(latent.true_length, config.post_time.start_prob(), config.post_time.span,
                              hash_key({seed, 1}));
  out.channel = sample_span_mask(dim, config.post_channel.start_prob(), config.post_channel.span, hash_key({seed, 2}));
  if (!out.time.starts.empty()) {
    auto rows_mask = out.time.mask;
    rows_mask.resize(rows, false);
    out.latent.states = ops::replace_rows(out.latent.states, rows_mask, params.get("encoder.mask_emb"));
  }
  if (!out.channel.starts.empty()) {
    std::vector<double> keep(rows * dim, 1.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < dim; ++c)
        if (out.channel.mask[c]) keep[r * dim + c] = 0.0;
    out.latent.states = ops::mul_const(out.latent.states, keep);
  }
  return out;
}

void configure_trainable(ParameterSet& params, const MaskingConfig& config) {
  params.set_trainable("", true);
  if (config.position == MaskPosition::Post) params.set_trainable("frontend.", false);
}

Tensor finetune_logits(const Utterance& utt, const ParameterSet& params, const FinetuneConfig& config, bool training,
                       std::uint64_t seed) {
  const auto& mc = config.model;
  const nn::ForwardContext ctx{training, mc.encoder.dropout, hash_key({seed, 4})};
  Tensor input = utt.input;
  if (training && config.masking.position == MaskPosition::Pre)
    input = apply_pre_cnn_masking(input, config.masking, seed).features;
  auto latent = run_frontend(input, params, mc.frontend, 0, ctx);
  if (training && config.masking.position == MaskPosition::Post)
    latent = apply_post_cnn_masking(latent, config.masking, params, seed).latent;
  const std::vector<bool> none(latent.states.dim(0), false);
  const auto enc = encode(latent.states, latent.true_length, none, params, mc.encoder, ctx);
  return nn::linear(params, "ctc_head", enc.context);
}

FinetuneMetrics finetune_step(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                              ParameterSet& params, AdamState& adam, const FinetuneConfig& config) {
  auto order = members;
  std::sort(order.begin(), order.end());
  const auto step = adam.step;
  configure_trainable(params, config.masking);
  params.zero_grad();

  FinetuneMetrics m;
  std::vector<Tensor> losses;
  for (auto index : order) {
    const auto& utt = corpus.at(index);
    const auto logits = finetune_logits(utt, params, config, true, hash_key({config.seed, step, index}));
    try {
      losses.push_back(ctc_loss(logits, utt.target));
    } catch (const CtcError& e) {
      std::cerr << "warning: " << utt.id << ": " << e.what() << ", skipped\n";
      ++m.skipped;
    }
  }
  if (losses.empty()) throw FinetuneError("finetune: no admissible utterance in the batch");
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ops::add(total, losses[i]);
  const auto loss = ops::scale(total, 1.0 / static_cast<double>(losses.size()));
  m.loss = loss.item();
  m.utterances = losses.size();
  if (!std::isfinite(m.loss))
    throw FinetuneError("finetune step " + std::to_string(step) + ": non-finite CTC loss");
  ensure_grads(params);
  backward(loss);
  m.lr = config.schedule.at(static_cast<std::int64_t>(step));
  adam_step(params, adam, m.lr);
  m.step = adam.step;
  return m;
}

EvalResult evaluate(const std::vector<Utterance>& corpus, const ParameterSet& params, const FinetuneConfig& config,
                    const Vocabulary& vocab) {
  EvalResult r;
  std::vector<TextPair> pairs;
  std::size_t scored = 0;
  for (const auto& utt : corpus) {
    const auto logits = finetune_logits(utt, params, config, false, 0).detach();
    if (ctc_admissible(logits.dim(0), utt.target)) {
      r.loss += ctc_loss(logits, utt.target).item();
      ++scored;
    } else {
      ++r.skipped;
    }
    r.hypotheses.push_back(vocab.decode(greedy_decode(logits)));
    pairs.push_back({utt.transcript, r.hypotheses.back()});
  }
  if (scored == 0) throw FinetuneError("evaluate: no admissible utterance");
  r.loss /= static_cast<double>(scored);
  r.cer = score_corpus(pairs, ErrorUnit::Char).error_rate();
  return r;
}

void load_pretrained_encoder(ParameterSet& params, const fs::path& checkpoint) {
  const auto ck = load_checkpoint(checkpoint);
  for (auto& [name, t] : params.entries()) {
    if (name.rfind("frontend.", 0) != 0 && name.rfind("encoder.", 0) != 0) continue;
    if (!ck.params.contains(name)) throw FinetuneError(checkpoint.string() + ": missing " + name);
    const auto& src = ck.params.get(name);
    if (src.shape() != t.shape()) throw FinetuneError(checkpoint.string() + ": shape mismatch at " + name);
    params.set_value(name, src.data());
  }
}

namespace {

std::vector<Utterance> drop_unusable(std::vector<Utterance> corpus, const FrontendConfig& frontend, bool need_admissible) {
  const auto min_input = frontend_min_input(frontend);
  std::erase_if(corpus, [&](const Utterance& u) {
    if (u.length < min_input) {
      std::cerr << "warning: " << u.id << ": shorter than the frontend receptive field, dropped\n";
      return true;
    }
    if (need_admissible && !ctc_admissible(frontend_output_length(u.length, frontend), u.target)) {
      std::cerr << "warning: " << u.id << ": transcript too long for its frame count, dropped\n";
      return true;
    }
    return false;
  });
  return corpus;
}

nlohmann::ordered_json eval_json(const EvalRecord& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["dev_loss"] = e.dev_loss;
  j["dev_cer"] = e.dev_cer;
  return j;
}

}  // namespace

FinetuneResult run_finetuning(const FinetuneInputs& inputs, const FinetuneConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto train_entries = load_manifest(inputs.train_manifest);
  const auto dev_entries = load_manifest(inputs.dev_manifest);
  if (train_entries.empty()) throw FinetuneError("finetune: empty train manifest");
  if (dev_entries.empty()) throw FinetuneError("finetune: empty dev manifest");
  fs::create_directories(out_dir);

  const auto vocab = inputs.vocab ? Vocabulary::load(*inputs.vocab) : build_vocab(train_entries);
  vocab.save(out_dir / "vocab.txt");

  const auto kind = config.model.frontend.kind;
  InputOptions io;
  io.kind = kind;
  io.vocab = &vocab;
  io.workers = config.workers;
  if (kind == FrontendKind::Fbank) {
    io.cmvn = inputs.cmvn ? *inputs.cmvn : estimate_manifest_cmvn(train_entries, config.workers);
    write_cmvn(out_dir / "cmvn.txt", *io.cmvn);
  }
  const auto train = drop_unusable(load_utterances(train_entries, io), config.model.frontend, true);
  const auto dev = drop_unusable(load_utterances(dev_entries, io), config.model.frontend, false);
  if (train.empty()) throw FinetuneError("finetune: no usable training utterance");
  if (dev.empty()) throw FinetuneError("finetune: no usable dev utterance");
  const auto budget = batch_budget(config.batch_seconds, kind);

  auto params = init_finetune_model(config.model, vocab.size(), config.seed);
  if (inputs.pretrained) load_pretrained_encoder(params, *inputs.pretrained);
  configure_trainable(params, config.masking);

  const auto topk_dir = out_dir / "topk";
  fs::remove_all(topk_dir);
  TopKStore store(topk_dir, config.keep_top);
  AdamState adam;
  FinetuneResult result;
  std::ofstream log(out_dir / "finetune_log.jsonl", std::ios::trunc);
  while (adam.step < static_cast<std::uint64_t>(config.max_steps)) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto members = batch_for_step(train, budget, config.seed, adam.step);
    const auto m = finetune_step(train, members, params, adam, config);
    nlohmann::ordered_json j;
    j["step"] = m.step;
    j["loss"] = m.loss;
    j["lr"] = m.lr;
    j["skipped"] = m.skipped;
    if (is_evaluation_step(m.step, config.eval_every)) {
      const auto ev = evaluate(dev, params, config, vocab);
      const EvalRecord rec{m.step, ev.loss, ev.cer};
      result.evaluations.push_back(rec);
      store.offer(params, m.step, ev.loss);
      j["dev_loss"] = ev.loss;
      j["dev_cer"] = ev.cer;
    }
    if (config.log_wall_time)
      j["wall_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log << j.dump() << "\n";
    log.flush();
  }

  auto averaged = average_checkpoints(store.paths());
  const auto avg_eval = evaluate(dev, averaged, config, vocab);
  result.averaged_model = out_dir / "final_avg.w2vj";
  result.averaged_dev_loss = avg_eval.loss;
  result.averaged_dev_cer = avg_eval.cer;
  save_checkpoint(result.averaged_model, averaged, {adam.step, avg_eval.loss});

  nlohmann::ordered_json report;
  report["evaluations"] = nlohmann::ordered_json::array();
  for (const auto& e : result.evaluations) report["evaluations"].push_back(eval_json(e));
  report["top_k"] = nlohmann::ordered_json::array();
  for (const auto& e : store.entries())
    report["top_k"].push_back({{"path", (topk_dir / e.path).string()}, {"step", e.step}, {"dev_loss", e.dev_metric}});
  report["averaged_model"] = result.averaged_model.string();
  report["averaged_dev_loss"] = result.averaged_dev_loss;
  report["averaged_dev_cer"] = result.averaged_dev_cer;
  result.report = out_dir / "finetune_report.json";
  std::ofstream(result.report) << report.dump(2) << "\n";
  return result;
}

}  // namespace w2vj
