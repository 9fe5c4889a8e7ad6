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

#include "w2vj/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "w2vj/nn.hpp"
#include "w2vj/ops.hpp"

namespace w2vj {
namespace {

struct GroupStats {
  std::vector<double> avg;         // [G*V]
  std::vector<double> perplexity;  // [G]
};

GroupStats group_stats(const Tensor& p, std::size_t groups, std::size_t entries) {
  if (p.rank() != 2 || p.dim(1) != groups * entries)
    throw QuantizerError("diversity: expected [T, " + std::to_string(groups * entries) + "] distributions, got " +
                         shape_str(p.shape()));
  const std::size_t t = p.dim(0);
  const std::size_t width = groups * entries;
  auto xs = p.data();
  GroupStats s{std::vector<double>(width, 0.0), std::vector<double>(groups, 0.0)};
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      double total = 0.0;
      for (std::size_t v = 0; v < entries; ++v) {
        const double x = xs[r * width + g * entries + v];
        if (x < 0.0) throw QuantizerError("diversity: negative probability");
        total += x;
        s.avg[g * entries + v] += x;
      }
      if (std::abs(total - 1.0) > 1e-6)
        throw QuantizerError("diversity: frame " + std::to_string(r) + " group " + std::to_string(g) +
                             " is not normalized");
    }
  }
  for (auto& a : s.avg) a /= static_cast<double>(t);
  for (std::size_t g = 0; g < groups; ++g) {
    double h = 0.0;
    for (std::size_t v = 0; v < entries; ++v) {
      const double a = s.avg[g * entries + v];
      if (a > 0.0) h -= a * std::log(a);
    }
    s.perplexity[g] = std::exp(h);
  }
  return s;
}

}  // namespace

void QuantizerConfig::validate() const {
  if (input_dim == 0 || groups == 0 || entries < 2 || entry_dim == 0 || output_dim == 0)
    throw QuantizerError("quantizer: invalid dimensions");
}

void init_quantizer(ParameterSet& params, const QuantizerConfig& c, Rng& rng) {
  c.validate();
  // Unit-variance logit weights: code choice starts driven by the latents, not by the Gumbel noise.
  nn::add_normal(params, "quantizer.logit_proj.weight", {c.logits_dim(), c.input_dim}, 1.0, rng);
  params.add("quantizer.logit_proj.bias", Tensor::zeros({c.logits_dim()}));
  nn::add_uniform(params, "quantizer.codebook", {c.logits_dim(), c.entry_dim}, 1.0, rng);
  nn::add_linear(params, "quantizer.out_proj", c.groups * c.entry_dim, c.output_dim, rng);
}

double gumbel_noise(std::uint64_t seed, std::size_t frame, std::size_t group, std::size_t entry) {
  return -std::log(-std::log(counter_uniform({seed, frame, group, entry})));
}

QuantizedSequence quantize_logits(const Tensor& logits, double temperature, QuantizeMode mode, std::uint64_t seed,
                                  const ParameterSet& params, const QuantizerConfig& c) {
  if (!(temperature > 0.0)) throw QuantizerError("quantize: temperature must be positive");
  if (logits.rank() != 2 || logits.dim(1) != c.logits_dim())
    throw QuantizerError("quantize: expected [T, " + std::to_string(c.logits_dim()) + "] logits, got " +
                         shape_str(logits.shape()));
  const std::size_t t = logits.dim(0);
  const std::size_t v = c.entries;
  const auto& codebook = params.get("quantizer.codebook");
  QuantizedSequence out;
  out.codes.assign(t, std::vector<std::size_t>(c.groups));
  std::vector<Tensor> selections, clean, chosen;
  for (std::size_t g = 0; g < c.groups; ++g) {
    const auto lg = ops::slice_cols(logits, g * v, v);
    std::vector<double> noise(t * v);
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t e = 0; e < v; ++e) noise[r * v + e] = gumbel_noise(seed, r, g, e);
    const auto soft = ops::softmax_rows(ops::scale(ops::add(lg, Tensor::from({t, v}, std::move(noise))),
                                                   1.0 / temperature));
    auto ps = soft.data();
    for (std::size_t r = 0; r < t; ++r)
      out.codes[r][g] =
          static_cast<std::size_t>(std::max_element(ps.begin() + r * v, ps.begin() + (r + 1) * v) - (ps.begin() + r * v));
    const auto sel = mode == QuantizeMode::Hard ? ops::straight_through_onehot(soft) : soft;
    selections.push_back(sel);
    clean.push_back(ops::softmax_rows(lg));
    chosen.push_back(ops::matmul(sel, ops::slice_rows(codebook, g * v, v)));
  }
  auto cat = [](const std::vector<Tensor>& parts) { return parts.size() == 1 ? parts.front() : ops::concat_cols(parts); };
  out.selection = cat(selections);
  out.clean_probs = cat(clean);
  out.targets = nn::linear(params, "quantizer.out_proj", cat(chosen));
  return out;
}

QuantizedSequence quantize(const Tensor& z, double temperature, QuantizeMode mode, std::uint64_t seed,
                           const ParameterSet& params, const QuantizerConfig& config) {
  if (z.rank() != 2 || z.dim(1) != config.input_dim)
    throw QuantizerError("quantize: expected [T, " + std::to_string(config.input_dim) + "] input, got " +
                         shape_str(z.shape()));
  return quantize_logits(nn::linear(params, "quantizer.logit_proj", z), temperature, mode, seed, params, config);
}

Tensor diversity_loss(const Tensor& distributions, std::size_t groups, std::size_t entries) {
  const auto s = group_stats(distributions, groups, entries);
  const double gv = static_cast<double>(groups * entries);
  double total = 0.0;
  for (double p : s.perplexity) total += p;
  const std::size_t t = distributions.dim(0);
  return Tensor::make({1}, {(gv - total) / gv}, {distributions}, [s, groups, entries, gv, t](detail::Node& self) {
    auto& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    const std::size_t width = groups * entries;
    // d/dp of -exp(H)/GV with H = -sum a log a and a = mean over frames.
    std::vector<double> da(width, 0.0);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t v = 0; v < entries; ++v) {
        const double a = s.avg[g * entries + v];
        if (a > 0.0) da[g * entries + v] = self.grad[0] * s.perplexity[g] * (std::log(a) + 1.0) / gv;
      }
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t i = 0; i < width; ++i) parent.grad[r * width + i] += da[i] / static_cast<double>(t);
  });
}

double code_perplexity(const Tensor& distributions, std::size_t groups, std::size_t entries) {
  double total = 0.0;
  for (double p : group_stats(distributions, groups, entries).perplexity) total += p;
  return total;
}

double anneal_temperature(std::int64_t step) {
  if (step < 0) throw std::invalid_argument("anneal_temperature: negative step");
  return std::max(2.0 * std::pow(0.999995, static_cast<double>(step)), 0.5);
}

}  // namespace w2vj
