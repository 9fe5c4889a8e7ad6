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

#include "w2vj/nn.hpp"

#include <cmath>
#include <random>

#include "w2vj/ops.hpp"

namespace w2vj::nn {

void add_uniform(ParameterSet& params, const std::string& name, Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  params.add(name, Tensor::from(std::move(shape), std::move(values)));
}

void add_normal(ParameterSet& params, const std::string& name, Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  params.add(name, Tensor::from(std::move(shape), std::move(values)));
}

void add_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                bool bias) {
  add_uniform(params, prefix + ".weight", {out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) params.add(prefix + ".bias", Tensor::zeros({out}));
}

void add_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  params.add(prefix + ".weight", Tensor::full({dim}, 1.0));
  params.add(prefix + ".bias", Tensor::zeros({dim}));
}

Tensor linear(const ParameterSet& params, const std::string& prefix, const Tensor& x) {
  const auto bias_name = prefix + ".bias";
  return ops::linear(x, params.get(prefix + ".weight"), params.contains(bias_name) ? params.get(bias_name) : Tensor{});
}

Tensor layer_norm(const ParameterSet& params, const std::string& prefix, const Tensor& x) {
  return ops::layer_norm(x, params.get(prefix + ".weight"), params.get(prefix + ".bias"));
}

Tensor ForwardContext::drop(const Tensor& x, std::uint64_t site) const {
  if (!training || dropout <= 0.0) return x;
  return ops::dropout(x, dropout, hash_key({seed, site}));
}

}  // namespace w2vj::nn
