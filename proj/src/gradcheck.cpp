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

#include "w2vj/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "w2vj/rng.hpp"

namespace w2vj {

GradCheckReport gradient_check(const std::function<Tensor()>& loss, ParameterSet& params,
                               const GradCheckOptions& options) {
  params.zero_grad();
  const Tensor root = loss();
  const double base = root.item();
  backward(root);
  {
    const double again = loss().item();
    if (std::memcmp(&base, &again, sizeof(double)) != 0)
      throw std::runtime_error("gradient_check: loss is not deterministic under a fixed seed");
  }

  GradCheckReport report;
  auto rng = make_rng(options.seed, 0x67726164);
  for (auto& [name, t] : params.entries()) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> probe(t.numel());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.max_entries != 0 && probe.size() > options.max_entries) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_entries);
    }
    ParamGradReport pr;
    pr.name = name;
    auto values = t.mutable_data();
    for (auto idx : probe) {
      const double saved = values[idx];
      auto central = [&](double h) {
        values[idx] = saved + h;
        const double up = loss().item();
        values[idx] = saved - h;
        const double down = loss().item();
        values[idx] = saved;
        return (up - down) / (2.0 * h);
      };
      // Richardson extrapolation cancels the h^2 truncation term.
      const double numeric = (4.0 * central(options.step / 2.0) - central(options.step)) / 3.0;
      const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), options.abs_floor});
      pr.max_rel_error = std::max(pr.max_rel_error, std::abs(analytic[idx] - numeric) / denom);
      ++pr.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, pr.max_rel_error);
    report.params.push_back(std::move(pr));
  }
  params.zero_grad();
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace w2vj
