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

#include <stdexcept>
#include <vector>

#include "w2vj/audio.hpp"
#include "w2vj/nn.hpp"
#include "w2vj/tensor.hpp"

namespace w2vj {

enum class FrontendKind { Wav, Fbank };

class FrontendError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConvLayerSpec {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;
};

struct FrontendConfig {
  FrontendKind kind = FrontendKind::Fbank;
  std::vector<ConvLayerSpec> layers;
  std::size_t input_dim = kNumMelBins;  // FBANK bins; 1 for waveforms
  std::size_t output_dim = 768;

  /// 7 layers of 1-D conv, strides (5,2,2,2,2,2,2), kernels (10,3,3,3,3,2,2).
  static FrontendConfig wav(std::size_t output_dim = 768, std::size_t channels = 512);
  /// 2 layers of 3x3 stride-2 2-D conv with padding 1.
  static FrontendConfig fbank(std::size_t output_dim = 768, std::size_t channels = 32);

  /// Width of the flattened map fed to the projection.
  std::size_t flattened_dim() const;
  void validate() const;
};

struct LatentSequence {
  Tensor states;  // [T', D]; rows at or past true_length are padding
  std::size_t true_length = 0;
};

/// Output length of the active frontend; throws FrontendError when the input is too short.
std::size_t frontend_output_length(std::size_t input_length, const FrontendConfig& config);
/// Smallest input length the frontend accepts.
std::size_t frontend_min_input(const FrontendConfig& config);

void init_frontend(ParameterSet& params, const FrontendConfig& config, Rng& rng);

/// samples [L, 1]; `valid_length` counts real samples (0 = all rows).
LatentSequence encode_wav(const Tensor& samples, const ParameterSet& params, const FrontendConfig& config,
                          std::size_t valid_length = 0, const nn::ForwardContext& ctx = {});
/// features [T, F]; rows at or past `valid_length` are masked before each conv.
LatentSequence encode_fbank(const Tensor& features, const ParameterSet& params, const FrontendConfig& config,
                            std::size_t valid_length = 0, const nn::ForwardContext& ctx = {});
/// Dispatches on config.kind.
LatentSequence run_frontend(const Tensor& input, const ParameterSet& params, const FrontendConfig& config,
                            std::size_t valid_length = 0, const nn::ForwardContext& ctx = {});

Tensor waveform_tensor(const Waveform& wave);
Tensor feature_tensor(const FeatureMatrix& features);

}  // namespace w2vj
