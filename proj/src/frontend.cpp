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

#include "w2vj/frontend.hpp"

#include <cmath>
#include <string>

#include "w2vj/ops.hpp"

namespace w2vj {
namespace {

std::string layer_name(std::size_t i) { return "frontend.layer" + std::to_string(i); }

std::size_t strided_length(std::size_t in, const ConvLayerSpec& l, std::size_t pad) {
  if (in + 2 * pad < l.kernel) return 0;
  return (in + 2 * pad - l.kernel) / l.stride + 1;
}

std::size_t fbank_pad(const ConvLayerSpec& l) { return (l.kernel - 1) / 2; }

}  // namespace

FrontendConfig FrontendConfig::wav(std::size_t output_dim, std::size_t channels) {
  FrontendConfig c;
  c.kind = FrontendKind::Wav;
  c.input_dim = 1;
  c.output_dim = output_dim;
  const std::size_t kernels[] = {10, 3, 3, 3, 3, 2, 2};
  const std::size_t strides[] = {5, 2, 2, 2, 2, 2, 2};
  for (int i = 0; i < 7; ++i) c.layers.push_back({channels, kernels[i], strides[i]});
  return c;
}

FrontendConfig FrontendConfig::fbank(std::size_t output_dim, std::size_t channels) {
  FrontendConfig c;
  c.kind = FrontendKind::Fbank;
  c.input_dim = kNumMelBins;
  c.output_dim = output_dim;
  c.layers = {{channels, 3, 2}, {channels, 3, 2}};
  return c;
}

std::size_t FrontendConfig::flattened_dim() const {
  if (kind == FrontendKind::Wav) return layers.back().channels;
  std::size_t f = input_dim;
  for (const auto& l : layers) f = strided_length(f, l, fbank_pad(l));
  return f * layers.back().channels;
}

void FrontendConfig::validate() const {
  if (layers.empty()) throw FrontendError("frontend: no conv layers");
  if (output_dim == 0 || input_dim == 0) throw FrontendError("frontend: zero dimension");
  for (const auto& l : layers)
    if (l.channels == 0 || l.kernel == 0 || l.stride == 0) throw FrontendError("frontend: zero layer extent");
  if (kind == FrontendKind::Wav && input_dim != 1) throw FrontendError("frontend: waveform input must be mono");
  if (kind == FrontendKind::Fbank) {
    for (const auto& l : layers)
      if (l.kernel % 2 == 0) throw FrontendError("frontend: 2-D kernels must be odd");
  }
}

std::size_t frontend_output_length(std::size_t input_length, const FrontendConfig& config) {
  if (input_length == 0) throw FrontendError("frontend: input length must be positive");
  const auto minimum = frontend_min_input(config);
  if (input_length < minimum)
    throw FrontendError("frontend: input of length " + std::to_string(input_length) + " is shorter than " +
                        std::to_string(minimum));
  std::size_t len = input_length;
  for (const auto& l : config.layers)
    len = strided_length(len, l, config.kind == FrontendKind::Fbank ? fbank_pad(l) : 0);
  return len;
}

std::size_t frontend_min_input(const FrontendConfig& config) {
  if (config.kind == FrontendKind::Fbank) {
    std::size_t m = 1;
    for (const auto& l : config.layers) m *= l.stride;
    return m;
  }
  // Receptive field of the stack.
  std::size_t field = 1;
  for (auto it = config.layers.rbegin(); it != config.layers.rend(); ++it) field = (field - 1) * it->stride + it->kernel;
  return field;
}

void init_frontend(ParameterSet& params, const FrontendConfig& config, Rng& rng) {
  config.validate();
  std::size_t in = config.input_dim;
  if (config.kind == FrontendKind::Fbank) in = 1;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const std::size_t fan_in = config.kind == FrontendKind::Fbank ? in * l.kernel * l.kernel : in * l.kernel;
    const Shape shape = config.kind == FrontendKind::Fbank ? Shape{l.channels, in, l.kernel, l.kernel}
                                                          : Shape{l.channels, in, l.kernel};
    nn::add_uniform(params, layer_name(i) + ".weight", shape, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
    params.add(layer_name(i) + ".bias", Tensor::zeros({l.channels}));
    nn::add_layer_norm(params, layer_name(i) + ".norm", l.channels);
    in = l.channels;
  }
  nn::add_linear(params, "frontend.proj", config.flattened_dim(), config.output_dim, rng);
}

LatentSequence encode_wav(const Tensor& samples, const ParameterSet& params, const FrontendConfig& config,
                          std::size_t valid_length, const nn::ForwardContext& ctx) {
  if (config.kind != FrontendKind::Wav) throw FrontendError("encode_wav: config is not a waveform frontend");
  Tensor x = samples.rank() == 1 ? ops::reshape(samples, {samples.dim(0), 1}) : samples;
  if (x.rank() != 2 || x.dim(1) != 1) throw FrontendError("encode_wav: expected [L, 1] samples");
  const std::size_t total = x.dim(0);
  if (valid_length == 0 || valid_length > total) valid_length = total;
  const std::size_t out_valid = frontend_output_length(valid_length, config);
  frontend_output_length(total, config);
  // Valid outputs of an unpadded strided conv only read valid inputs, so no masking is needed.
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    x = ops::conv1d(x, params.get(layer_name(i) + ".weight"), params.get(layer_name(i) + ".bias"), l.stride, 0, 0, 1);
    x = ops::gelu(nn::layer_norm(params, layer_name(i) + ".norm", x));
    x = ctx.drop(x, 100 + i);
  }
  return {nn::linear(params, "frontend.proj", x), out_valid};
}

LatentSequence encode_fbank(const Tensor& features, const ParameterSet& params, const FrontendConfig& config,
                            std::size_t valid_length, const nn::ForwardContext& ctx) {
  if (config.kind != FrontendKind::Fbank) throw FrontendError("encode_fbank: config is not an FBANK frontend");
  if (features.rank() != 2 || features.dim(1) != config.input_dim)
    throw FrontendError("encode_fbank: expected [T, " + std::to_string(config.input_dim) + "] features, got " +
                        shape_str(features.shape()));
  const std::size_t total = features.dim(0);
  if (valid_length == 0 || valid_length > total) valid_length = total;
  std::size_t valid = valid_length;
  const std::size_t out_valid = frontend_output_length(valid, config);
  frontend_output_length(total, config);

  Tensor x = ops::reshape(features, {total, config.input_dim, 1});
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    x = ops::mask_rows(x, valid * x.dim(1));
    x = ops::conv2d(x, params.get(layer_name(i) + ".weight"), params.get(layer_name(i) + ".bias"), l.stride,
                    fbank_pad(l));
    x = ops::gelu(nn::layer_norm(params, layer_name(i) + ".norm", x));
    x = ctx.drop(x, 200 + i);
    valid = strided_length(valid, l, fbank_pad(l));
  }
  x = ops::reshape(x, {x.dim(0), x.dim(1) * x.dim(2)});
  return {nn::linear(params, "frontend.proj", x), out_valid};
}

LatentSequence run_frontend(const Tensor& input, const ParameterSet& params, const FrontendConfig& config,
                            std::size_t valid_length, const nn::ForwardContext& ctx) {
  return config.kind == FrontendKind::Wav ? encode_wav(input, params, config, valid_length, ctx)
                                          : encode_fbank(input, params, config, valid_length, ctx);
}

Tensor waveform_tensor(const Waveform& wave) {
  if (wave.samples.empty()) throw FrontendError("waveform is empty");
  return Tensor::from({wave.samples.size(), 1}, wave.samples);
}

Tensor feature_tensor(const FeatureMatrix& features) {
  if (features.rows == 0) throw FrontendError("feature matrix is empty");
  return Tensor::from({features.rows, features.cols}, features.data);
}

}  // namespace w2vj
