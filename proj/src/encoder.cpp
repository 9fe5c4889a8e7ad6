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

#include "w2vj/encoder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "w2vj/ops.hpp"

namespace w2vj {
namespace {

std::string block_name(std::size_t l) { return "encoder.block" + std::to_string(l); }

std::uint64_t site(std::size_t block, std::uint64_t k) { return 1000 + block * 64 + k; }

std::vector<std::int64_t> default_positions(std::size_t t) {
  std::vector<std::int64_t> p(t);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

void check_input(const Tensor& h, const EncoderConfig& config, const char* what) {
  if (h.rank() != 2 || h.dim(1) != config.dim)
    throw EncoderError(std::string(what) + ": expected [T, " + std::to_string(config.dim) + "], got " +
                       shape_str(h.shape()));
}

Tensor feed_forward(const Tensor& h, const ParameterSet& params, const std::string& p, bool swish,
                    const nn::ForwardContext& ctx, std::uint64_t drop_site) {
  Tensor x = nn::linear(params, p + ".in", nn::layer_norm(params, p + ".norm", h));
  x = swish ? ops::swish(x) : ops::gelu(x);
  x = ctx.drop(x, drop_site);
  return ctx.drop(nn::linear(params, p + ".out", x), drop_site + 1);
}

void add_feed_forward(ParameterSet& params, const std::string& p, const EncoderConfig& c, Rng& rng) {
  nn::add_layer_norm(params, p + ".norm", c.dim);
  nn::add_linear(params, p + ".in", c.dim, c.ffn_dim, rng);
  nn::add_linear(params, p + ".out", c.ffn_dim, c.dim, rng);
}

void add_attention(ParameterSet& params, const std::string& p, const EncoderConfig& c, Rng& rng, bool relative) {
  nn::add_layer_norm(params, p + ".norm", c.dim);
  // No key bias: it shifts each score row by a constant, which the softmax cancels.
  for (const char* n : {".q", ".k", ".v", ".out"}) nn::add_linear(params, p + n, c.dim, c.dim, rng, n[1] != 'k');
  if (relative) {
    nn::add_linear(params, p + ".pos", c.dim, c.dim, rng, false);
    params.add(p + ".bias_u", Tensor::zeros({c.dim}));
    params.add(p + ".bias_v", Tensor::zeros({c.dim}));
  }
}

void zero_param(ParameterSet& params, const std::string& name) {
  if (params.contains(name)) params.set_value(name, std::vector<double>(params.get(name).numel(), 0.0));
}

void zero_linear(ParameterSet& params, const std::string& prefix) {
  zero_param(params, prefix + ".weight");
  zero_param(params, prefix + ".bias");
}

}  // namespace

EncoderConfig EncoderConfig::transformer_base() {
  EncoderConfig c;
  c.kind = EncoderKind::Transformer;
  return c;
}

EncoderConfig EncoderConfig::conformer_base() { return EncoderConfig{}; }

void EncoderConfig::validate() const {
  if (blocks == 0 || dim == 0 || heads == 0 || ffn_dim == 0) throw EncoderError("encoder: zero dimension");
  if (dim % heads != 0) throw EncoderError("encoder: dim must be divisible by heads");
  if (kind == EncoderKind::Conformer) {
    if (conv_kernel % 2 == 0) throw EncoderError("encoder: conv_kernel must be odd");
    if (dim % 2 != 0) throw EncoderError("encoder: relative positions need an even dim");
  }
  if (kind == EncoderKind::Transformer && pos_conv_kernel > 0 &&
      (pos_conv_groups == 0 || dim % pos_conv_groups != 0))
    throw EncoderError("encoder: dim must be divisible by pos_conv_groups");
  if (dropout < 0.0 || dropout >= 1.0) throw EncoderError("encoder: dropout must be in [0, 1)");
}

Tensor relative_position_table(std::size_t length, std::size_t dim) {
  const std::size_t rows = 2 * length - 1;
  std::vector<double> pe(rows * dim);
  for (std::size_t k = 0; k < rows; ++k) {
    const double r = static_cast<double>(k) - static_cast<double>(length - 1);
    for (std::size_t m = 0; m < dim / 2; ++m) {
      const double w = std::pow(10000.0, -2.0 * static_cast<double>(m) / static_cast<double>(dim));
      pe[k * dim + 2 * m] = std::sin(r * w);
      pe[k * dim + 2 * m + 1] = std::cos(r * w);
    }
  }
  return Tensor::from({rows, dim}, std::move(pe));
}

Tensor dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, std::size_t valid,
                             std::vector<Tensor>* weights) {
  const std::size_t dh = q.dim(1) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = ops::slice_cols(q, h * dh, dh);
    const auto kh = ops::slice_cols(k, h * dh, dh);
    const auto vh = ops::slice_cols(v, h * dh, dh);
    const auto w = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), scale), valid);
    if (weights) weights->push_back(w);
    out.push_back(ops::matmul(w, vh));
  }
  return heads == 1 ? out.front() : ops::concat_cols(out);
}

Tensor relative_position_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                   std::size_t valid, const RelativePositionParams& rel,
                                   const std::vector<std::int64_t>& positions, std::vector<Tensor>* weights) {
  if (q.shape() != k.shape() || q.shape() != v.shape()) throw EncoderError("relative attention: q, k, v differ");
  const std::size_t t = q.dim(0);
  const std::size_t d = q.dim(1);
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& pos = positions.empty() ? default_positions(t) : positions;
  const auto p = ops::linear(relative_position_table(t, d), rel.pos_weight, Tensor{});
  const auto qu = ops::add_row(q, rel.bias_u);
  const auto qv = ops::add_row(q, rel.bias_v);
  std::vector<Tensor> out;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto kh = ops::slice_cols(k, h * dh, dh);
    const auto content = ops::matmul(ops::slice_cols(qu, h * dh, dh), ops::transpose(kh));
    const auto position = ops::relative_shift(
        ops::matmul(ops::slice_cols(qv, h * dh, dh), ops::transpose(ops::slice_cols(p, h * dh, dh))), pos);
    const auto w = ops::softmax_rows(ops::scale(ops::add(content, position), scale), valid);
    if (weights) weights->push_back(w);
    out.push_back(ops::matmul(w, ops::slice_cols(v, h * dh, dh)));
  }
  return heads == 1 ? out.front() : ops::concat_cols(out);
}

void init_encoder(ParameterSet& params, const EncoderConfig& c, Rng& rng) {
  c.validate();
  nn::add_uniform(params, "encoder.mask_emb", {c.dim}, 0.1, rng);
  if (c.kind == EncoderKind::Transformer && c.pos_conv_kernel > 0) {
    const std::size_t per_group = c.dim / c.pos_conv_groups;
    nn::add_uniform(params, "encoder.pos_conv.weight", {c.dim, per_group, c.pos_conv_kernel},
                    1.0 / std::sqrt(static_cast<double>(per_group * c.pos_conv_kernel)), rng);
    params.add("encoder.pos_conv.bias", Tensor::zeros({c.dim}));
  }
  for (std::size_t l = 0; l < c.blocks; ++l) {
    const auto p = block_name(l);
    if (c.kind == EncoderKind::Transformer) {
      add_attention(params, p + ".attn", c, rng, false);
      add_feed_forward(params, p + ".ffn", c, rng);
      continue;
    }
    add_feed_forward(params, p + ".ffn.0", c, rng);
    add_attention(params, p + ".attn", c, rng, true);
    nn::add_layer_norm(params, p + ".conv.norm", c.dim);
    nn::add_linear(params, p + ".conv.pw1", c.dim, 2 * c.dim, rng);
    nn::add_uniform(params, p + ".conv.dw.weight", {c.dim, 1, c.conv_kernel},
                    1.0 / std::sqrt(static_cast<double>(c.conv_kernel)), rng);
    params.add(p + ".conv.dw.bias", Tensor::zeros({c.dim}));
    nn::add_layer_norm(params, p + ".conv.dw_norm", c.dim);
    nn::add_linear(params, p + ".conv.pw2", c.dim, c.dim, rng);
    add_feed_forward(params, p + ".ffn.1", c, rng);
    if (c.block_final_norm) nn::add_layer_norm(params, p + ".norm.final", c.dim);
  }
}

Tensor transformer_block(const Tensor& h, std::size_t valid, const ParameterSet& params, std::size_t index,
                         const EncoderConfig& config, const nn::ForwardContext& ctx) {
  check_input(h, config, "transformer_block");
  const auto p = block_name(index) + ".attn";
  const auto x = nn::layer_norm(params, p + ".norm", h);
  auto a = dot_product_attention(nn::linear(params, p + ".q", x), nn::linear(params, p + ".k", x),
                                 nn::linear(params, p + ".v", x), config.heads, valid);
  auto out = ops::add(h, ctx.drop(nn::linear(params, p + ".out", a), site(index, 0)));
  return ops::add(out, feed_forward(out, params, block_name(index) + ".ffn", false, ctx, site(index, 1)));
}

Tensor conformer_block(const Tensor& h, std::size_t valid, const ParameterSet& params, std::size_t index,
                       const EncoderConfig& config, const nn::ForwardContext& ctx,
                       const std::vector<std::int64_t>& positions) {
  check_input(h, config, "conformer_block");
  const auto b = block_name(index);
  auto out = ops::add(h, ops::scale(feed_forward(h, params, b + ".ffn.0", true, ctx, site(index, 0)), 0.5));

  const auto p = b + ".attn";
  const auto x = nn::layer_norm(params, p + ".norm", out);
  const RelativePositionParams rel{params.get(p + ".pos.weight"), params.get(p + ".bias_u"), params.get(p + ".bias_v")};
  const auto a = relative_position_attention(nn::linear(params, p + ".q", x), nn::linear(params, p + ".k", x),
                                             nn::linear(params, p + ".v", x), config.heads, valid, rel, positions);
  out = ops::add(out, ctx.drop(nn::linear(params, p + ".out", a), site(index, 2)));

  const auto c = b + ".conv";
  auto y = ops::glu(nn::linear(params, c + ".pw1", nn::layer_norm(params, c + ".norm", out)));
  y = ops::mask_rows(y, valid);
  const std::size_t pad = (config.conv_kernel - 1) / 2;
  y = ops::conv1d(y, params.get(c + ".dw.weight"), params.get(c + ".dw.bias"), 1, pad, pad, config.dim);
  y = ops::swish(nn::layer_norm(params, c + ".dw_norm", y));
  out = ops::add(out, ctx.drop(nn::linear(params, c + ".pw2", y), site(index, 3)));

  out = ops::add(out, ops::scale(feed_forward(out, params, b + ".ffn.1", true, ctx, site(index, 4)), 0.5));
  return config.block_final_norm ? nn::layer_norm(params, b + ".norm.final", out) : out;
}

EncoderOutput encode(const Tensor& z, std::size_t valid, const std::vector<bool>& masked, const ParameterSet& params,
                     const EncoderConfig& config, const nn::ForwardContext& ctx, bool keep_hidden) {
  check_input(z, config, "encode");
  const std::size_t t = z.dim(0);
  if (valid == 0 || valid > t) valid = t;
  Tensor h = z;
  if (!masked.empty()) {
    if (masked.size() > t) throw EncoderError("encode: masked positions exceed sequence length");
    std::vector<bool> m(masked);
    m.resize(t, false);
    h = ops::replace_rows(h, m, params.get("encoder.mask_emb"));
  }
  h = ops::mask_rows(h, valid);
  if (config.kind == EncoderKind::Transformer && config.pos_conv_kernel > 0) {
    const std::size_t k = config.pos_conv_kernel;
    const auto pc = ops::conv1d(h, params.get("encoder.pos_conv.weight"), params.get("encoder.pos_conv.bias"), 1,
                                k / 2, (k - 1) / 2, config.pos_conv_groups);
    h = ops::add(h, ops::mask_rows(ops::gelu(pc), valid));
  }
  h = ctx.drop(h, 999);
  EncoderOutput result;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    h = config.kind == EncoderKind::Transformer ? transformer_block(h, valid, params, l, config, ctx)
                                                : conformer_block(h, valid, params, l, config, ctx);
    if (keep_hidden) result.hidden.push_back(h);
  }
  result.context = h;
  return result;
}

void zero_residual_outputs(ParameterSet& params, const EncoderConfig& config) {
  zero_linear(params, "encoder.pos_conv");
  for (std::size_t l = 0; l < config.blocks; ++l) {
    const auto b = block_name(l);
    for (const char* n : {".attn.out", ".ffn.out", ".ffn.0.out", ".ffn.1.out", ".conv.pw2"}) zero_linear(params, b + n);
  }
}

}  // namespace w2vj
