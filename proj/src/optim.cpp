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

#include "w2vj/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace w2vj {

void adam_step(ParameterSet& params, AdamState& state, double lr) {
  const auto& cfg = state.config;
  for (auto& [name, t] : params.entries()) {
    if (t.requires_grad() && !t.has_grad()) throw std::logic_error("adam_step: missing gradient for " + name);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params.entries()) {
    if (!t.requires_grad()) continue;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != t.numel()) m.assign(t.numel(), 0.0);
    if (v.size() != t.numel()) v.assign(t.numel(), 0.0);
    auto w = t.mutable_data();
    auto g = t.mutable_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      g[i] = 0.0;
    }
  }
}

LrSchedule LrSchedule::tri_stage(double peak, std::int64_t total_steps) {
  LrSchedule s;
  s.kind = ScheduleKind::TriStage;
  s.peak = peak;
  s.total_steps = total_steps;
  return s;
}

LrSchedule LrSchedule::warmup_linear_decay(double peak, std::int64_t total_steps, double warmup_frac) {
  LrSchedule s;
  s.kind = ScheduleKind::WarmupLinearDecay;
  s.peak = peak;
  s.total_steps = total_steps;
  s.warmup_frac = warmup_frac;
  s.hold_frac = 0.0;
  s.init_scale = 0.0;
  s.final_scale = 0.0;
  return s;
}

std::int64_t LrSchedule::warmup_steps() const {
  return static_cast<std::int64_t>(std::llround(warmup_frac * static_cast<double>(total_steps)));
}

std::int64_t LrSchedule::hold_steps() const {
  return static_cast<std::int64_t>(std::llround(hold_frac * static_cast<double>(total_steps)));
}

double LrSchedule::at(std::int64_t step) const {
  if (step < 0) throw std::invalid_argument("lr schedule: negative step");
  if (total_steps <= 0) throw std::invalid_argument("lr schedule: total_steps must be positive");
  const auto warm = warmup_steps();
  const auto hold_end = std::min(total_steps, warm + hold_steps());
  const double floor = peak * init_scale;
  const double end = peak * final_scale;
  if (step < warm) return floor + (peak - floor) * static_cast<double>(step) / static_cast<double>(warm);
  if (step < hold_end) return peak;
  if (step >= total_steps) return end;
  const auto decay = total_steps - hold_end;
  return peak - (peak - end) * static_cast<double>(step - hold_end) / static_cast<double>(decay);
}

}  // namespace w2vj
