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

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace w2vj {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kFrameLength = 400;  // 25 ms
inline constexpr std::size_t kFrameShift = 160;   // 10 ms
inline constexpr std::size_t kNumMelBins = 80;

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-major real matrix: waveform samples (cols = 1), FBANK frames, or encoder states.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct Waveform {
  std::vector<double> samples;  // [-1, 1]
  int sample_rate = kSampleRate;
};

/// 16-bit PCM mono WAV at 16 kHz.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Binary feature file: "W2VF", u32 rows, u32 cols, f64 little-endian payload.
FeatureMatrix read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureMatrix& features);

std::size_t fbank_num_frames(std::size_t num_samples);

/// 80-bin log mel energies with a 25 ms Hann window every 10 ms.
///
/// Per frame: pre-emphasis 0.97, Hann window, 512-point power spectrum, 80
/// triangular HTK-mel filters spanning 20-7600 Hz, natural log floored at
/// 1e-10. No dithering, so extraction is a pure function of the samples.
FeatureMatrix extract_fbank(const Waveform& wave);

inline constexpr double kLogEnergyFloor = 1e-10;
inline constexpr double kCmvnVarianceFloor = 1e-8;

/// Per-dimension global statistics; variance already floored.
struct CmvnStats {
  std::vector<double> mean;
  std::vector<double> variance;
  std::size_t frame_count = 0;

  std::size_t dim() const { return mean.size(); }
};

/// Mergeable running moments (Chan et al. pairwise update).
class CmvnAccumulator {
 public:
  explicit CmvnAccumulator(std::size_t dim = kNumMelBins);
  void add(const FeatureMatrix& features);
  void merge(const CmvnAccumulator& other);
  std::size_t frame_count() const { return count_; }
  CmvnStats finish() const;

 private:
  std::size_t dim_;
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

CmvnStats estimate_cmvn(std::span<const FeatureMatrix> corpus);
FeatureMatrix apply_cmvn(const FeatureMatrix& features, const CmvnStats& stats);
FeatureMatrix invert_cmvn(const FeatureMatrix& features, const CmvnStats& stats);

/// Text format: means, variances, frame count; one line each, %.17g.
void write_cmvn(const std::filesystem::path& path, const CmvnStats& stats);
CmvnStats read_cmvn(const std::filesystem::path& path);

}  // namespace w2vj
