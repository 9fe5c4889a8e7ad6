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
#include <functional>
#include <string>
#include <vector>

#include "w2vj/tensor.hpp"

namespace w2vj {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  /// Entries probed per parameter; 0 checks every entry.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct ParamGradReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradReport> params;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares analytic gradients of `loss` w.r.t. every trainable entry of
/// `params` with Richardson-extrapolated central differences (steps h and h/2).
/// `loss` must rebuild the graph from the current parameter values on every
/// call and be deterministic; a second evaluation that differs bitwise raises
/// std::runtime_error.
GradCheckReport gradient_check(const std::function<Tensor()>& loss, ParameterSet& params,
                               const GradCheckOptions& options = {});

}  // namespace w2vj
