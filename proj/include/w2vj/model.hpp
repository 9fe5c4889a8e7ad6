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

#include "w2vj/encoder.hpp"
#include "w2vj/frontend.hpp"
#include "w2vj/quantizer.hpp"

namespace w2vj {

struct ModelConfig {
  FrontendConfig frontend = FrontendConfig::fbank();
  EncoderConfig encoder;
  QuantizerConfig quantizer;

  /// BASE sizes: 768-dim, 12 blocks, 12 heads, 3072 FFN; G=2, V=320.
  static ModelConfig base(FrontendKind frontend, EncoderKind encoder);
  /// Desk-scale sizes used by the synthetic-corpus tests: 64-dim, 2 blocks.
  static ModelConfig toy(FrontendKind frontend, EncoderKind encoder);

  void validate() const;
};

/// frontend.*, encoder.*, quantizer.* and pretrain.final_proj.
ParameterSet init_pretrain_model(const ModelConfig& config, std::uint64_t seed);
/// frontend.*, encoder.* and ctc_head.*.
ParameterSet init_finetune_model(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);
void add_ctc_head(ParameterSet& params, std::size_t dim, std::size_t vocab_size, std::uint64_t seed);

/// Keeps only entries whose name starts with one of `prefixes`.
ParameterSet select_parameters(const ParameterSet& params, const std::vector<std::string>& prefixes);

}  // namespace w2vj
