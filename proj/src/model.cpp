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

#include "w2vj/model.hpp"

#include "w2vj/nn.hpp"

namespace w2vj {

ModelConfig ModelConfig::base(FrontendKind frontend, EncoderKind encoder) {
  ModelConfig c;
  c.frontend = frontend == FrontendKind::Wav ? FrontendConfig::wav() : FrontendConfig::fbank();
  c.encoder = encoder == EncoderKind::Transformer ? EncoderConfig::transformer_base() : EncoderConfig::conformer_base();
  return c;
}

ModelConfig ModelConfig::toy(FrontendKind frontend, EncoderKind encoder) {
  ModelConfig c;
  const std::size_t dim = 64;
  c.frontend = frontend == FrontendKind::Wav ? FrontendConfig::wav(dim, 32) : FrontendConfig::fbank(dim, 8);
  c.encoder.kind = encoder;
  c.encoder.blocks = 2;
  c.encoder.dim = dim;
  c.encoder.heads = 4;
  c.encoder.ffn_dim = 128;
  c.encoder.conv_kernel = 15;
  c.encoder.pos_conv_kernel = 16;
  c.encoder.pos_conv_groups = 4;
  c.encoder.dropout = 0.0;
  c.quantizer.input_dim = dim;
  c.quantizer.groups = 2;
  c.quantizer.entries = 16;
  c.quantizer.entry_dim = 16;
  c.quantizer.output_dim = 32;
  return c;
}

void ModelConfig::validate() const {
  frontend.validate();
  encoder.validate();
  quantizer.validate();
  if (frontend.output_dim != encoder.dim) throw EncoderError("model: frontend output_dim must equal encoder dim");
  if (quantizer.input_dim != frontend.output_dim)
    throw QuantizerError("model: quantizer input_dim must equal frontend output_dim");
}

ParameterSet init_pretrain_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet params;
  auto rf = make_rng(seed, 1);
  init_frontend(params, config.frontend, rf);
  auto re = make_rng(seed, 2);
  init_encoder(params, config.encoder, re);
  auto rq = make_rng(seed, 3);
  init_quantizer(params, config.quantizer, rq);
  auto rp = make_rng(seed, 4);
  nn::add_linear(params, "pretrain.final_proj", config.encoder.dim, config.quantizer.output_dim, rp);
  return params;
}

ParameterSet init_finetune_model(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  ParameterSet params;
  auto rf = make_rng(seed, 1);
  init_frontend(params, config.frontend, rf);
  auto re = make_rng(seed, 2);
  init_encoder(params, config.encoder, re);
  add_ctc_head(params, config.encoder.dim, vocab_size, seed);
  return params;
}

void add_ctc_head(ParameterSet& params, std::size_t dim, std::size_t vocab_size, std::uint64_t seed) {
  if (vocab_size < 2) throw std::invalid_argument("ctc head: vocabulary needs blank plus one token");
  auto rng = make_rng(seed, 5);
  nn::add_linear(params, "ctc_head", dim, vocab_size, rng);
}

ParameterSet select_parameters(const ParameterSet& params, const std::vector<std::string>& prefixes) {
  ParameterSet out;
  for (const auto& [name, t] : params) {
    for (const auto& p : prefixes) {
      if (name.compare(0, p.size(), p) == 0) {
        out.add(name, t.clone_leaf());
        break;
      }
    }
  }
  return out;
}

}  // namespace w2vj
