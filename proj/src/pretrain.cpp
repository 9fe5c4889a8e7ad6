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

#include "w2vj/pretrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "w2vj/checkpoint.hpp"
#include "w2vj/nn.hpp"
#include "w2vj/ops.hpp"
#include "w2vj/rng.hpp"

namespace w2vj {
namespace fs = std::filesystem;

PretrainConfig PretrainConfig::toy(FrontendKind frontend, EncoderKind encoder) {
  PretrainConfig c;
  c.model = ModelConfig::toy(frontend, encoder);
  c.mask_span = frontend == FrontendKind::Fbank ? 5 : 10;
  c.max_steps = 200;
  c.schedule = LrSchedule::warmup_linear_decay(2e-3, c.max_steps, 0.08);
  c.batch_seconds = 4.0;
  c.checkpoint_every = 50;
  return c;
}

void PretrainConfig::validate() const {
  model.validate();
  if (mask_start_prob < 0.0 || mask_start_prob > 1.0) throw PretrainError("pretrain: mask_start_prob outside [0, 1]");
  if (mask_span == 0) throw PretrainError("pretrain: mask_span must be positive");
  if (distractors == 0) throw PretrainError("pretrain: need at least one distractor");
  if (!(kappa > 0.0)) throw PretrainError("pretrain: kappa must be positive");
  if (frontend_grad_scale < 0.0) throw PretrainError("pretrain: frontend_grad_scale must be non-negative");
  if (diversity_weight < 0.0) throw PretrainError("pretrain: diversity_weight must be non-negative");
  if (max_steps <= 0) throw PretrainError("pretrain: max_steps must be positive");
  if (!(batch_seconds > 0.0)) throw PretrainError("pretrain: batch_seconds must be positive");
}

MaskPlan sample_mask(std::size_t frames, double start_prob, std::size_t span, std::uint64_t seed) {
  if (frames == 0) throw PretrainError("sample_mask: empty sequence");
  return sample_span_mask(frames, start_prob, span, seed, true);
}

std::vector<std::vector<std::size_t>> sample_distractors(const MaskPlan& plan, std::size_t k, std::uint64_t seed) {
  const std::size_t m = plan.masked_count();
  if (m < 2) return {};
  std::vector<std::vector<std::size_t>> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].reserve(k + 1);
    out[i].push_back(i);
    for (std::size_t j = 0; j < k; ++j) {
      auto d = static_cast<std::size_t>(counter_uniform({seed, i, j}) * static_cast<double>(m - 1));
      d = std::min(d, m - 2);
      out[i].push_back(d >= i ? d + 1 : d);
    }
  }
  return out;
}

Tensor contrastive_candidates_loss(const Tensor& c, const Tensor& q, const std::vector<std::vector<std::size_t>>& candidates,
                                   double kappa) {
  if (c.rank() != 2 || q.rank() != 2 || c.dim(1) != q.dim(1))
    throw PretrainError("contrastive: c and q must be [N, D] and [P, D]");
  if (candidates.size() != c.dim(0)) throw PretrainError("contrastive: one candidate list per query required");
  const auto sims = ops::scale(ops::matmul(ops::l2_normalize_rows(c), ops::transpose(ops::l2_normalize_rows(q))),
                               1.0 / kappa);
  const auto logp = ops::log_softmax_rows(ops::gather_cols(sims, candidates));
  return ops::scale(ops::mean(ops::slice_cols(logp, 0, 1)), -1.0);
}

ContrastiveBatchLoss contrastive_loss(const Tensor& c, const Tensor& q, const MaskPlan& plan, std::size_t k,
                                      double kappa, std::uint64_t seed) {
  ContrastiveBatchLoss out;
  out.masked_frames = plan.masked_count();
  const auto candidates = sample_distractors(plan, k, seed);
  if (candidates.empty()) {
    out.skipped = true;
    return out;
  }
  const auto idx = plan.masked_indices();
  out.loss = contrastive_candidates_loss(ops::gather_rows(c, idx), ops::gather_rows(q, idx), candidates, kappa);
  return out;
}

PretrainForward pretrain_forward(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                                 const ParameterSet& params, const PretrainConfig& config, std::uint64_t step) {
  auto order = members;
  std::sort(order.begin(), order.end());
  const auto& mc = config.model;
  const double tau = anneal_temperature(static_cast<std::int64_t>(step));

  std::vector<Tensor> weighted;
  std::vector<Tensor> probs;
  PretrainForward out;
  for (auto index : order) {
    const auto& utt = corpus.at(index);
    const auto key = hash_key({config.seed, step, index});
    const nn::ForwardContext ctx{true, mc.encoder.dropout, hash_key({key, 4})};

    auto latent = run_frontend(utt.input, params, mc.frontend, 0, ctx);
    if (config.frontend_grad_scale != 1.0) latent.states = ops::scale_grad(latent.states, config.frontend_grad_scale);
    const auto plan = sample_mask(latent.true_length, config.mask_start_prob, config.mask_span, hash_key({key, 1}));
    const auto candidates = sample_distractors(plan, config.distractors, hash_key({key, 2}));
    if (candidates.empty()) {
      std::cerr << "warning: " << utt.id << ": fewer than two masked frames, skipped\n";
      ++out.skipped;
      continue;
    }
    const auto idx = plan.masked_indices();
    const auto enc = encode(latent.states, latent.true_length, plan.mask, params, mc.encoder, ctx);
    const auto c = ops::gather_rows(nn::linear(params, "pretrain.final_proj", enc.context), idx);
    // Targets come from the unmasked latents.
    const auto qs = quantize(ops::gather_rows(latent.states, idx), tau, config.quantize_mode, hash_key({key, 3}), params,
                             mc.quantizer);
    const auto loss = contrastive_candidates_loss(c, qs.targets, candidates, config.kappa);
    weighted.push_back(ops::scale(loss, static_cast<double>(idx.size())));
    probs.push_back(qs.clean_probs);
    out.masked_frames += idx.size();
  }
  if (weighted.empty()) throw PretrainError("pretrain: no utterance in the batch has two masked frames");

  Tensor total = weighted.front();
  for (std::size_t i = 1; i < weighted.size(); ++i) total = ops::add(total, weighted[i]);
  out.contrastive = ops::scale(total, 1.0 / static_cast<double>(out.masked_frames));
  const auto all_probs = ops::concat_rows(probs);
  out.diversity = diversity_loss(all_probs, mc.quantizer.groups, mc.quantizer.entries);
  out.perplexity = code_perplexity(all_probs, mc.quantizer.groups, mc.quantizer.entries);
  out.loss = ops::add(out.contrastive, ops::scale(out.diversity, config.diversity_weight));
  return out;
}

void ensure_grads(ParameterSet& params) {
  for (auto& [name, t] : params.entries())
    if (t.requires_grad()) t.mutable_grad();
}

namespace {

std::string non_finite_report(const ParameterSet& params) {
  std::ostringstream os;
  for (const auto& [name, t] : params) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) {
        os << " " << name;
        break;
      }
    }
  }
  const auto s = os.str();
  return s.empty() ? " none" : s;
}

}  // namespace

PretrainMetrics pretrain_step(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                              ParameterSet& params, AdamState& adam, const PretrainConfig& config) {
  const auto step = adam.step;
  params.zero_grad();
  PretrainForward fwd;
  try {
    fwd = pretrain_forward(corpus, members, params, config, step);
  } catch (const NumericError& e) {
    throw PretrainError("pretrain step " + std::to_string(step) + ": " + e.what() +
                        "; non-finite parameters:" + non_finite_report(params));
  }
  PretrainMetrics m;
  m.loss = fwd.loss.item();
  m.contrastive = fwd.contrastive.item();
  m.diversity = fwd.diversity.item();
  m.perplexity = fwd.perplexity;
  m.masked_frames = fwd.masked_frames;
  m.skipped = fwd.skipped;
  if (!std::isfinite(m.loss)) {
    std::ostringstream os;
    os << "pretrain step " << step << ": non-finite loss (contrastive " << m.contrastive << ", diversity "
       << m.diversity << ", perplexity " << m.perplexity << "); non-finite parameters:" << non_finite_report(params);
    throw PretrainError(os.str());
  }
  ensure_grads(params);
  backward(fwd.loss);
  m.lr = config.schedule.at(static_cast<std::int64_t>(step));
  adam_step(params, adam, m.lr);
  m.step = adam.step;
  return m;
}

namespace {

nlohmann::ordered_json metrics_json(const PretrainMetrics& m, std::optional<double> wall_ms) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["contrastive"] = m.contrastive;
  j["diversity"] = m.diversity;
  j["perplexity"] = m.perplexity;
  j["lr"] = m.lr;
  if (wall_ms) j["wall_ms"] = *wall_ms;
  return j;
}

// Keeps log lines for steps <= `step`; later lines belong to work that is about to be redone.
void truncate_log(const fs::path& log, std::uint64_t step) {
  std::vector<std::string> kept;
  {
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::uint64_t>() <= step) kept.push_back(line);
    }
  }
  std::ofstream out(log, std::ios::trunc);
  for (const auto& l : kept) out << l << "\n";
}

}  // namespace

PretrainResult run_pretraining(const fs::path& manifest, const PretrainConfig& config, const fs::path& out_dir,
                               std::optional<CmvnStats> cmvn) {
  config.validate();
  const auto entries = load_manifest(manifest);
  if (entries.empty()) throw PretrainError("pretrain: empty manifest " + manifest.string());
  fs::create_directories(out_dir);

  const auto kind = config.model.frontend.kind;
  if (kind == FrontendKind::Fbank && !cmvn) {
    cmvn = estimate_manifest_cmvn(entries, config.workers);
    write_cmvn(out_dir / "cmvn.txt", *cmvn);
  }
  InputOptions io;
  io.kind = kind;
  if (kind == FrontendKind::Fbank) io.cmvn = cmvn;
  io.workers = config.workers;
  auto corpus = load_utterances(entries, io);
  const auto min_input = frontend_min_input(config.model.frontend);
  std::erase_if(corpus, [&](const Utterance& u) {
    if (u.length >= min_input) return false;
    std::cerr << "warning: " << u.id << ": shorter than the frontend receptive field, dropped\n";
    return true;
  });
  if (corpus.empty()) throw PretrainError("pretrain: no utterance is long enough for the frontend");
  const auto budget = batch_budget(config.batch_seconds, kind);

  const auto last = out_dir / "pretrain_last.w2vj";
  const auto last_opt = out_dir / "pretrain_last.adam.w2vj";
  PretrainResult result;
  result.log = out_dir / "pretrain_log.jsonl";
  result.final_checkpoint = out_dir / "pretrain_final.w2vj";

  auto params = init_pretrain_model(config.model, config.seed);
  AdamState adam;
  if (fs::exists(last) && fs::exists(last_opt)) {
    auto ck = load_checkpoint(last);
    for (const auto& [name, t] : params) {
      if (!ck.params.contains(name) || ck.params.get(name).shape() != t.shape())
        throw PretrainError("pretrain: " + last.string() + " does not match the configured model at " + name);
    }
    params = std::move(ck.params);
    params.set_trainable("", true);
    adam = load_adam_state(last_opt, adam.config);
    truncate_log(result.log, adam.step);
  } else {
    std::ofstream(result.log, std::ios::trunc);
  }

  auto save_state = [&] {
    save_checkpoint(last, params, {adam.step, std::nullopt});
    save_adam_state(last_opt, adam);
  };
  std::ofstream log(result.log, std::ios::app);
  const auto max_steps = static_cast<std::uint64_t>(config.max_steps);
  const auto stop = config.stop_at_step > 0 ? std::min(max_steps, static_cast<std::uint64_t>(config.stop_at_step))
                                            : max_steps;
  while (adam.step < stop) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto members = batch_for_step(corpus, budget, config.seed, adam.step);
    const auto m = pretrain_step(corpus, members, params, adam, config);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log << metrics_json(m, config.log_wall_time ? std::optional<double>(ms) : std::nullopt).dump() << "\n";
    log.flush();
    result.metrics.push_back(m);
    if (config.checkpoint_every > 0 && m.step % static_cast<std::uint64_t>(config.checkpoint_every) == 0) save_state();
  }
  save_state();
  if (adam.step >= max_steps) save_checkpoint(result.final_checkpoint, params, {adam.step, std::nullopt});
  return result;
}

}  // namespace w2vj
