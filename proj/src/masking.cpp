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

#include "w2vj/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "w2vj/rng.hpp"

namespace w2vj {

std::size_t MaskPlan::masked_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

std::vector<std::size_t> MaskPlan::masked_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

MaskPlan sample_span_mask(std::size_t length, double start_prob, std::size_t span, std::uint64_t seed,
                          bool force_nonempty) {
  if (length == 0) throw std::invalid_argument("span mask: length must be positive");
  if (span == 0) throw std::invalid_argument("span mask: span must be positive");
  if (!(start_prob >= 0.0 && start_prob <= 1.0)) throw std::invalid_argument("span mask: probability outside [0, 1]");
  MaskPlan plan;
  plan.span = span;
  plan.mask.assign(length, false);
  for (std::size_t i = 0; i < length; ++i)
    if (counter_uniform({seed, i}) < start_prob) plan.starts.push_back(i);
  if (plan.starts.empty() && force_nonempty) {
    const auto pos = static_cast<std::size_t>(counter_uniform({seed, length, 0x466f726365ULL}) * static_cast<double>(length));
    plan.starts.push_back(std::min(pos, length - 1));
  }
  for (auto s : plan.starts)
    for (std::size_t i = s; i < std::min(s + span, length); ++i) plan.mask[i] = true;
  return plan;
}

double expected_mask_fraction(std::size_t length, double start_prob, std::size_t span) {
  // Index i stays unmasked iff none of the min(i+1, span) possible starts fire.
  double total = 0.0;
  for (std::size_t i = 0; i < length; ++i)
    total += 1.0 - std::pow(1.0 - start_prob, static_cast<double>(std::min(i + 1, span)));
  return total / static_cast<double>(length);
}

void SpanMaskSpec::validate(const char* what) const {
  if (span == 0) throw std::invalid_argument(std::string(what) + ": span must be positive");
  if (!(probability >= 0.0 && probability <= 1.0))
    throw std::invalid_argument(std::string(what) + ": probability outside [0, 1]");
}

}  // namespace w2vj
