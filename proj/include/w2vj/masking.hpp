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
#include <vector>

namespace w2vj {

/// Span mask over one axis.
struct MaskPlan {
  std::vector<bool> mask;
  std::vector<std::size_t> starts;
  std::size_t span = 0;

  std::size_t masked_count() const;
  std::vector<std::size_t> masked_indices() const;
};

/// Each index starts a span with probability `start_prob`; spans are truncated at
/// `length` and unioned. With `force_nonempty`, an empty draw gets one span at a
/// seeded position.
MaskPlan sample_span_mask(std::size_t length, double start_prob, std::size_t span, std::uint64_t seed,
                          bool force_nonempty = false);

/// Closed-form expected masked fraction of sample_span_mask without forcing.
double expected_mask_fraction(std::size_t length, double start_prob, std::size_t span);

/// (length, probability) pair; each index starts a span with probability / span.
struct SpanMaskSpec {
  std::size_t span = 10;
  double probability = 0.0;

  double start_prob() const { return probability / static_cast<double>(span); }
  void validate(const char* what) const;
};

}  // namespace w2vj
