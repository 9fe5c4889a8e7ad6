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

class FinetuneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MaskPosition { Pre, Post };

/// Pre-CNN: time and spectral spans on FBANK, set to 0. Post-CNN: time spans
/// replaced by encoder.mask_emb and channel spans zeroed; the frontend is frozen.
struct MaskingConfig {
  MaskPosition position = MaskPosition::Post;
  SpanMaskSpec post_time{10, 0.5};
  SpanMaskSpec post_channel{64, 0.1};
  SpanMaskSpec pre_time{20, 0.65};
  SpanMaskSpec pre_spectral{30, 0.1};

  void validate() const;
};

struct FinetuneConfig {
  ModelConfig model = ModelConfig::toy(FrontendKind::Fbank, EncoderKind::Transformer);
  MaskingConfig masking;
  LrSchedule schedule = LrSchedule::tri_stage(3e-5, 80000);
  std::int64_t max_steps = 80000;
  std::int64_t eval_every = 1600;
  std::size_t keep_top = 5;
  double batch_seconds = 8.0;
  std::uint64_t seed = 0;
  int workers = 1;
  bool log_wall_time = true;

  /// Desk-scale recipe for the synthetic tone corpus (400 steps, toy model).
  static FinetuneConfig toy(FrontendKind frontend, EncoderKind encoder, MaskPosition position);
  void validate() const;
};

/// Number of evaluations a run performs: one every `eval_every` steps.
std::int64_t count_evaluations(std::int64_t max_steps, std::int64_t eval_every);
/// True when the update numbered `step` (1-based) is followed by an evaluation.
bool is_evaluation_step(std::uint64_t step, std::int64_t eval_every);

struct PreCnnMasks {
  Tensor features;  // [T, F]
  MaskPlan time;
  MaskPlan spectral;
};
/// features [T, F] after CMVN; masked cells become 0.
PreCnnMasks apply_pre_cnn_masking(const Tensor& features, const MaskingConfig& config, std::uint64_t seed);

struct PostCnnMasks {
  LatentSequence latent;
  MaskPlan time;
  MaskPlan channel;
};
PostCnnMasks apply_post_cnn_masking(const LatentSequence& latent, const MaskingConfig& config,
                                    const ParameterSet& params, std::uint64_t seed);

/// Freezes the frontend iff masking is post-CNN; every other entry stays trainable.
void configure_trainable(ParameterSet& params, const MaskingConfig& config);

/// Frame logits [T', V] of one utterance; masking is applied only when `training`.
Tensor finetune_logits(const Utterance& utt, const ParameterSet& params, const FinetuneConfig& config, bool training,
                       std::uint64_t seed);

struct FinetuneMetrics {
  std::uint64_t step = 0;  // 1-based index of the update just applied
  double loss = 0.0;       // mean CTC loss over the admissible utterances
  double lr = 0.0;
  std::size_t utterances = 0;
  std::size_t skipped = 0;  // inadmissible targets
};

/// One CTC update at `adam.step`; members are visited in ascending index order.
FinetuneMetrics finetune_step(const std::vector<Utterance>& corpus, const std::vector<std::size_t>& members,
                              ParameterSet& params, AdamState& adam, const FinetuneConfig& config);

struct EvalResult {
  double loss = 0.0;  // mean CTC loss over admissible utterances
  double cer = 0.0;
  std::size_t skipped = 0;
  std::vector<std::string> hypotheses;
};

/// Unmasked evaluation with greedy decoding.
EvalResult evaluate(const std::vector<Utterance>& corpus, const ParameterSet& params, const FinetuneConfig& config,
                    const Vocabulary& vocab);

struct EvalRecord {
  std::uint64_t step = 0;
  double dev_loss = 0.0;
  double dev_cer = 0.0;
};

struct FinetuneInputs {
  std::filesystem::path train_manifest;
  std::filesystem::path dev_manifest;
  std::optional<std::filesystem::path> vocab;       // built from the train transcripts when absent
  std::optional<std::filesystem::path> pretrained;  // frontend.* and encoder.* are copied from it
  std::optional<CmvnStats> cmvn;                    // estimated from the train manifest when absent
};

struct FinetuneResult {
  std::vector<EvalRecord> evaluations;
  std::filesystem::path averaged_model;
  double averaged_dev_loss = 0.0;
  double averaged_dev_cer = 0.0;
  std::filesystem::path report;
};

/// Trains for max_steps, evaluates on dev every eval_every steps, keeps the
/// keep_top checkpoints with the lowest dev loss under <out>/topk and writes
/// their element-wise average to <out>/final_avg.w2vj. Also writes
/// <out>/finetune_log.jsonl, <out>/vocab.txt and <out>/finetune_report.json.
FinetuneResult run_finetuning(const FinetuneInputs& inputs, const FinetuneConfig& config,
                              const std::filesystem::path& out_dir);

/// Copies frontend.* and encoder.* from a pretraining checkpoint into `params`.
void load_pretrained_encoder(ParameterSet& params, const std::filesystem::path& checkpoint);

}  // namespace w2vj
