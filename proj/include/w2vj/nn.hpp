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

#include <string>

#include "w2vj/rng.hpp"
#include "w2vj/tensor.hpp"

// Parameter registration and application helpers shared by the model blocks.
namespace w2vj::nn {

/// weight [out, in] ~ U(+-1/sqrt(in)), bias zero.
void add_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                bool bias = true);
void add_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t dim);
/// Uniform(-bound, bound) tensor registered under `name`.
void add_uniform(ParameterSet& params, const std::string& name, Shape shape, double bound, Rng& rng);
void add_normal(ParameterSet& params, const std::string& name, Shape shape, double stddev, Rng& rng);

Tensor linear(const ParameterSet& params, const std::string& prefix, const Tensor& x);
Tensor layer_norm(const ParameterSet& params, const std::string& prefix, const Tensor& x);

/// Dropout switch and seed for one forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  /// Dropout that is a no-op outside training; `site` distinguishes call sites.
  Tensor drop(const Tensor& x, std::uint64_t site) const;
};

}  // namespace w2vj::nn
