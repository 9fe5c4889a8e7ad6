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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "w2vj/masking.hpp"
#include "w2vj/model.hpp"
#include "w2vj/optim.hpp"
#include "w2vj/pipeline.hpp"

namespace w2vj {

class PretrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainConfig {
  ModelConfig model = ModelConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer);
  double mask_start_prob = 0.065;
  std::size_t mask_span = 10;
  std::size_t distractors = 100;
  double kappa = 0.1;
  double diversity_weight = 0.1;
  double frontend_grad_scale = 0.1;  // gradient multiplier on the frontend output
  QuantizeMode quantize_mode = QuantizeMode::Hard;  // Soft only for finite-difference checks
  LrSchedule schedule = LrSchedule::warmup_linear_decay(5e-4, 400000, 0.08);
  std::int64_t max_steps = 400000;
  std::int64_t stop_at_step = 0;  // > 0 ends the run early, as if interrupted
  double batch_seconds = 8.0;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;
  int workers = 1;
  bool log_wall_time = true;

  /// Desk-scale recipe for the synthetic tone corpus: toy model, 200 steps, and a
  /// mask span of 200 ms at the frontend's latent rate (5 frames FBANK, 10 WAV).
  static PretrainConfig toy(FrontendKind frontend, EncoderKind encoder);
  void validate() const;
};

/// Pretraining mask over T' latent frames; never empty.
MaskPlan sample_mask(std::size_t frames, double start_prob, std::size_t span, std::uint64_t seed);

/// Candidate lists over the M masked frames, numbered 0..M-1: row i holds i (the
/// positive) followed by K other masked frames drawn uniformly with replacement.
/// Empty when fewer than two frames are masked.
std::vector<std::vector<std::size_t>> sample_distractors(const MaskPlan& plan, std::size_t k, std::uint64_t seed);

/// mean_i -log softmax(cos(c_i, q_j) / kappa over j in candidates[i])[0].
/// c: [N, D] queries; q: [P, D] candidate targets; candidates[i] indexes rows of q.
Tensor contrastive_candidates_loss(const Tensor& c, const Tensor& q, const std::vector<std::vector<std::size_t>>& candidates,
                                   double kappa);

struct ContrastiveBatchLoss {
  Tensor loss;                  // mean over masked frames; undefined when skipped
  std::size_t masked_frames = 0;
  bool skipped = false;         // fewer than two masked frames
};

/// Contrastive loss between projected context c [T', D] and targets q [T', D]
/// at the masked frames, with distractors from other masked frames.
ContrastiveBatchLoss contrastive_loss(const Tensor& c, const Tensor& q, const MaskPlan& plan, std::size_t k,
                                      double kappa, std::uint64_t seed);

struct PretrainForward {
  Tensor loss;
  Tensor contrastive;
  Tensor diversity;
  double perplexity = 0.0;
  std::size_t masked_frames = 0;
  std::size_t skipped = 0;
};

/// Forward pass over `members` of `corpus` (processed in ascending index order).
/// Masks, distractors and Gumbel noise are keyed by (seed, step, utterance index).
PretrainForward pretrain_forward(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                                 const ParameterSet& params, const PretrainConfig& config, std::uint64_t step);

struct PretrainMetrics {
  std::uint64_t step = 0;  // 1-based index of the update just applied
  double loss = 0.0;
  double contrastive = 0.0;
  double diversity = 0.0;
  double perplexity = 0.0;
  double lr = 0.0;
  std::size_t masked_frames = 0;
  std::size_t skipped = 0;
};

/// One update at `adam.step`. Non-finite losses raise PretrainError naming the offending terms.
PretrainMetrics pretrain_step(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                              ParameterSet& params, AdamState& adam, const PretrainConfig& config);

struct PretrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log;
  std::vector<PretrainMetrics> metrics;  // updates performed by this call
};

/// Full loop. Writes <out>/pretrain_log.jsonl, periodic <out>/pretrain_last.w2vj
/// plus optimizer state, and <out>/pretrain_final.w2vj. Resumes from
/// pretrain_last.w2vj when present. FBANK runs use `cmvn` or estimate it from the
/// manifest (written to <out>/cmvn.txt).
PretrainResult run_pretraining(const std::filesystem::path& manifest, const PretrainConfig& config,
                               const std::filesystem::path& out_dir, std::optional<CmvnStats> cmvn = std::nullopt);

/// Gives every trainable parameter a (zero) gradient slot so unused ones do not stall Adam.
void ensure_grads(ParameterSet& params);

}  // namespace w2vj
