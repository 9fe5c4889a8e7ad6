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
#include <string>
#include <vector>

namespace w2vj {

/// Finite-difference check results for one differentiable component.
struct GradientOracleResult {
  std::string component;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// fbank_frontend, wav_frontend, transformer_block, conformer_block, quantizer,
/// contrastive, ctc, toy_model.
const std::vector<std::string>& gradient_oracle_components();

/// Runs the named components (all when `only` is empty) over seeds
/// base_seed .. base_seed + seeds - 1 at the default tolerance.
std::vector<GradientOracleResult> run_gradient_oracles(std::size_t seeds = 5, std::uint64_t base_seed = 0,
                                                       const std::vector<std::string>& only = {});

}  // namespace w2vj
