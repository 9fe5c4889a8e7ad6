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

#include "w2vj/rng.hpp"
#include "w2vj/tensor.hpp"

namespace w2vj {

class QuantizerError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QuantizerConfig {
  std::size_t input_dim = 768;
  std::size_t groups = 2;
  std::size_t entries = 320;
  std::size_t entry_dim = 128;
  std::size_t output_dim = 256;

  std::size_t logits_dim() const { return groups * entries; }
  void validate() const;
};

enum class QuantizeMode { Hard, Soft };

struct QuantizedSequence {
  Tensor targets;                          // [T', output_dim]
  std::vector<std::vector<std::size_t>> codes;  // [T'][G] chosen entry per group
  Tensor selection;                        // [T', G*V]: one-hot (hard) or soft weights
  Tensor clean_probs;                      // [T', G*V] softmax of the noise-free logits
};

void init_quantizer(ParameterSet& params, const QuantizerConfig& config, Rng& rng);

/// Gumbel noise for (seed, frame, group, entry); pure function of its key.
double gumbel_noise(std::uint64_t seed, std::size_t frame, std::size_t group, std::size_t entry);

/// Quantizes logits [T', G*V] directly; the noise key uses the row index as frame.
QuantizedSequence quantize_logits(const Tensor& logits, double temperature, QuantizeMode mode, std::uint64_t seed,
                                  const ParameterSet& params, const QuantizerConfig& config);
/// z [T', input_dim] -> logits via quantizer.logit_proj, then quantize_logits.
QuantizedSequence quantize(const Tensor& z, double temperature, QuantizeMode mode, std::uint64_t seed,
                           const ParameterSet& params, const QuantizerConfig& config);

/// (G*V - sum_g exp(H(mean_t p_t,g))) / (G*V) over per-frame distributions [T', G*V].
/// Throws QuantizerError when a group does not sum to 1 within 1e-6.
Tensor diversity_loss(const Tensor& distributions, std::size_t groups, std::size_t entries);
/// sum_g exp(H(mean_t p_t,g)), the code perplexity diagnostic.
double code_perplexity(const Tensor& distributions, std::size_t groups, std::size_t entries);

/// max(2 * 0.999995^step, 0.5)
double anneal_temperature(std::int64_t step);

}  // namespace w2vj
