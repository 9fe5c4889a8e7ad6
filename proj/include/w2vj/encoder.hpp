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
#include <stdexcept>
#include <vector>

#include "w2vj/nn.hpp"
#include "w2vj/tensor.hpp"

namespace w2vj {

enum class EncoderKind { Transformer, Conformer };

class EncoderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  EncoderKind kind = EncoderKind::Conformer;
  std::size_t blocks = 12;
  std::size_t dim = 768;
  std::size_t heads = 12;
  std::size_t ffn_dim = 3072;
  std::size_t conv_kernel = 31;  // Conformer depthwise conv
  // Transformer positional convolution; kernel 0 disables it.
  std::size_t pos_conv_kernel = 128;
  std::size_t pos_conv_groups = 16;
  double dropout = 0.1;
  // Conformer per-block output norm. Off only for the identity check.
  bool block_final_norm = true;

  static EncoderConfig transformer_base();
  static EncoderConfig conformer_base();
  void validate() const;
};

/// Learned pieces of relative-position attention for one block.
struct RelativePositionParams {
  Tensor pos_weight;  // [D, D], no bias
  Tensor bias_u;      // [D], content bias, split per head
  Tensor bias_v;      // [D], position bias, split per head
};

/// Sinusoidal table, row k encodes offset k - (T-1): [2T-1, dim].
Tensor relative_position_table(std::size_t length, std::size_t dim);

/// Multi-head attention over projected q, k, v [T, D]; keys at or past `valid` get weight 0.
/// `weights`, when given, receives one [T, T] attention matrix per head.
Tensor dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, std::size_t valid,
                             std::vector<Tensor>* weights = nullptr);
/// Transformer-XL scoring: (q+u)k^T + rel_shift((q+v)P^T), scaled, softmax over valid keys.
Tensor relative_position_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                   std::size_t valid, const RelativePositionParams& rel,
                                   const std::vector<std::int64_t>& positions, std::vector<Tensor>* weights = nullptr);

void init_encoder(ParameterSet& params, const EncoderConfig& config, Rng& rng);

Tensor transformer_block(const Tensor& h, std::size_t valid, const ParameterSet& params, std::size_t index,
                         const EncoderConfig& config, const nn::ForwardContext& ctx = {});
/// `positions` defaults to 0..T-1.
Tensor conformer_block(const Tensor& h, std::size_t valid, const ParameterSet& params, std::size_t index,
                       const EncoderConfig& config, const nn::ForwardContext& ctx = {},
                       const std::vector<std::int64_t>& positions = {});

struct EncoderOutput {
  Tensor context;              // [T', D]
  std::vector<Tensor> hidden;  // per block, when requested
};

/// Runs every block. Rows flagged in `masked` are replaced by encoder.mask_emb first.
EncoderOutput encode(const Tensor& z, std::size_t valid, const std::vector<bool>& masked, const ParameterSet& params,
                     const EncoderConfig& config, const nn::ForwardContext& ctx = {}, bool keep_hidden = false);

/// Zeroes every residual-branch output projection so each block is the identity
/// (Conformer additionally needs block_final_norm off).
void zero_residual_outputs(ParameterSet& params, const EncoderConfig& config);

}  // namespace w2vj
