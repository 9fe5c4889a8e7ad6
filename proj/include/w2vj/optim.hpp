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
#include <map>
#include <string>
#include <vector>

#include "w2vj/tensor.hpp"

namespace w2vj {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
};

/// First/second moments keyed by parameter name.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// Bias-corrected Adam update of every trainable parameter; clears grads afterwards.
/// Frozen parameters (requires_grad == false) are skipped.
void adam_step(ParameterSet& params, AdamState& state, double lr);

enum class ScheduleKind { TriStage, WarmupLinearDecay };

/// Learning-rate schedule descriptor.
///
/// TriStage: linear warmup from peak*init_scale over warmup_frac of the run,
/// hold at peak for hold_frac, then linear decay to peak*final_scale at
/// total_steps (held there afterwards). WarmupLinearDecay: linear warmup from
/// 0 to peak, then linear decay to 0 at total_steps.
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::TriStage;
  double peak = 3e-5;
  std::int64_t total_steps = 80000;
  double warmup_frac = 0.1;
  double hold_frac = 0.4;
  double init_scale = 0.01;
  double final_scale = 0.05;

  static LrSchedule tri_stage(double peak, std::int64_t total_steps);
  static LrSchedule warmup_linear_decay(double peak, std::int64_t total_steps, double warmup_frac);

  std::int64_t warmup_steps() const;
  std::int64_t hold_steps() const;
  double at(std::int64_t step) const;
};

}  // namespace w2vj
