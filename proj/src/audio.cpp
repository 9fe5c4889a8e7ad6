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

#include "w2vj/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <sstream>

#include "w2vj/binary_io.hpp"

namespace w2vj {

namespace {

constexpr std::size_t kFftSize = 512;
constexpr double kPreemphasis = 0.97;
constexpr double kLowFreq = 20.0;
constexpr double kHighFreq = 7600.0;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw AudioError("write failed for " + path.string());
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

struct MelBank {
  // Dense [kNumMelBins, kFftSize / 2 + 1] weights.
  std::vector<double> weights;
  std::vector<double> window;

  MelBank() {
    const std::size_t bins = kFftSize / 2 + 1;
    weights.assign(kNumMelBins * bins, 0.0);
    const double mel_lo = hz_to_mel(kLowFreq);
    const double mel_hi = hz_to_mel(kHighFreq);
    const double delta = (mel_hi - mel_lo) / static_cast<double>(kNumMelBins + 1);
    for (std::size_t m = 0; m < kNumMelBins; ++m) {
      const double left = mel_lo + delta * static_cast<double>(m);
      const double center = left + delta;
      const double right = center + delta;
      for (std::size_t k = 0; k < bins; ++k) {
        const double mel = hz_to_mel(static_cast<double>(k) * kSampleRate / static_cast<double>(kFftSize));
        double w = 0.0;
        if (mel > left && mel <= center) w = (mel - left) / (center - left);
        else if (mel > center && mel < right) w = (right - mel) / (right - center);
        weights[m * bins + k] = w;
      }
    }
    window.resize(kFrameLength);
    for (std::size_t i = 0; i < kFrameLength; ++i)
      window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                        static_cast<double>(kFrameLength - 1));
  }
};

const MelBank& mel_bank() {
  static const MelBank bank;
  return bank;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  RealFft() {
    in_ = fftw_alloc_real(kFftSize);
    out_ = fftw_alloc_complex(kFftSize / 2 + 1);
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

 private:
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

std::string format_row(const std::vector<double>& values) {
  std::string line;
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    if (i) line += ' ';
    line += buf;
  }
  return line;
}

std::vector<double> parse_row(const std::string& line) {
  std::vector<double> values;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) values.push_back(std::stod(tok));
  return values;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  io::ByteReader r(bytes.data(), bytes.size());
  char tag[4];
  try {
    r.get_bytes(tag, 4);
    if (std::string(tag, 4) != "RIFF") throw AudioError("not a RIFF file: " + path.string());
    r.get<std::uint32_t>();
    r.get_bytes(tag, 4);
    if (std::string(tag, 4) != "WAVE") throw AudioError("not a WAVE file: " + path.string());
    bool have_fmt = false;
    while (r.remaining() >= 8) {
      r.get_bytes(tag, 4);
      const auto size = r.get<std::uint32_t>();
      const std::string id(tag, 4);
      if (id == "fmt ") {
        const auto format = r.get<std::uint16_t>();
        const auto channels = r.get<std::uint16_t>();
        const auto rate = r.get<std::uint32_t>();
        r.get<std::uint32_t>();
        r.get<std::uint16_t>();
        const auto bits = r.get<std::uint16_t>();
        if (format != 1 || channels != 1 || bits != 16 || rate != kSampleRate)
          throw AudioError("expected 16-bit PCM mono 16 kHz audio in " + path.string());
        std::vector<std::uint8_t> skip(size - 16);
        r.get_bytes(skip.data(), skip.size());
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw AudioError("data chunk before fmt chunk in " + path.string());
        Waveform w;
        w.samples.resize(size / 2);
        for (auto& s : w.samples) s = static_cast<double>(r.get<std::int16_t>()) / 32768.0;
        return w;
      } else {
        std::vector<std::uint8_t> skip(size + (size & 1));
        r.get_bytes(skip.data(), skip.size());
      }
    }
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const AudioError*>(&e)) throw;
    throw AudioError("truncated WAV file " + path.string());
  }
  throw AudioError("no data chunk in " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) throw AudioError("only 16 kHz audio is supported");
  io::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  w.put_bytes("RIFF", 4);
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_bytes("WAVE", 4);
  w.put_bytes("fmt ", 4);
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(1);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(kSampleRate);
  w.put<std::uint32_t>(kSampleRate * 2);
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_bytes("data", 4);
  w.put<std::uint32_t>(data_bytes);
  for (double s : wave.samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    w.put<std::int16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
  }
  write_file(path, w.bytes());
}

FeatureMatrix read_features(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  io::ByteReader r(bytes.data(), bytes.size());
  try {
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string(magic, 4) != "W2VF") throw AudioError("not a feature file: " + path.string());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    FeatureMatrix f(rows, cols);
    r.get_bytes(f.data.data(), f.data.size() * sizeof(double));
    return f;
  } catch (const AudioError&) {
    throw;
  } catch (const std::runtime_error&) {
    throw AudioError("truncated feature file " + path.string());
  }
}

void write_features(const std::filesystem::path& path, const FeatureMatrix& features) {
  io::ByteWriter w;
  w.put_bytes("W2VF", 4);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.cols));
  w.put_bytes(features.data.data(), features.data.size() * sizeof(double));
  write_file(path, w.bytes());
}

std::size_t fbank_num_frames(std::size_t num_samples) {
  if (num_samples < kFrameLength) return 0;
  return 1 + (num_samples - kFrameLength) / kFrameShift;
}

FeatureMatrix extract_fbank(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) throw AudioError("expected 16 kHz audio");
  const auto frames = fbank_num_frames(wave.samples.size());
  if (frames == 0)
    throw AudioError("waveform of " + std::to_string(wave.samples.size()) + " samples is shorter than one window (" +
                     std::to_string(kFrameLength) + ")");
  const auto& bank = mel_bank();
  const std::size_t bins = kFftSize / 2 + 1;
  FeatureMatrix out(frames, kNumMelBins);
  RealFft fft;
  std::vector<double> frame(kFrameLength);
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = wave.samples.data() + t * kFrameShift;
    for (std::size_t i = kFrameLength; i-- > 1;) frame[i] = src[i] - kPreemphasis * src[i - 1];
    frame[0] = src[0] - kPreemphasis * src[0];
    double* in = fft.input();
    for (std::size_t i = 0; i < kFrameLength; ++i) in[i] = frame[i] * bank.window[i];
    std::fill(in + kFrameLength, in + kFftSize, 0.0);
    fft.execute();
    for (std::size_t k = 0; k < bins; ++k) power[k] = fft.power(k);
    for (std::size_t m = 0; m < kNumMelBins; ++m) {
      double e = 0.0;
      const double* w = bank.weights.data() + m * bins;
      for (std::size_t k = 0; k < bins; ++k) e += w[k] * power[k];
      out.at(t, m) = std::log(std::max(e, kLogEnergyFloor));
    }
  }
  return out;
}

CmvnAccumulator::CmvnAccumulator(std::size_t dim) : dim_(dim), mean_(dim, 0.0), m2_(dim, 0.0) {}

void CmvnAccumulator::add(const FeatureMatrix& features) {
  if (features.cols != dim_)
    throw std::invalid_argument("cmvn: expected " + std::to_string(dim_) + " columns, got " +
                                std::to_string(features.cols));
  if (features.rows == 0) return;
  // Two-pass moments of the block, then merge.
  CmvnAccumulator block(dim_);
  block.count_ = features.rows;
  for (std::size_t t = 0; t < features.rows; ++t)
    for (std::size_t d = 0; d < dim_; ++d) block.mean_[d] += features.at(t, d);
  for (auto& m : block.mean_) m /= static_cast<double>(features.rows);
  for (std::size_t t = 0; t < features.rows; ++t)
    for (std::size_t d = 0; d < dim_; ++d) {
      const double dev = features.at(t, d) - block.mean_[d];
      block.m2_[d] += dev * dev;
    }
  merge(block);
}

void CmvnAccumulator::merge(const CmvnAccumulator& other) {
  if (other.dim_ != dim_) throw std::invalid_argument("cmvn: merging accumulators of different dimension");
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t d = 0; d < dim_; ++d) {
    const double delta = other.mean_[d] - mean_[d];
    mean_[d] += delta * nb / n;
    m2_[d] += other.m2_[d] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

CmvnStats CmvnAccumulator::finish() const {
  if (count_ == 0) throw std::invalid_argument("cmvn: no frames accumulated");
  CmvnStats s;
  s.mean = mean_;
  s.variance.resize(dim_);
  for (std::size_t d = 0; d < dim_; ++d)
    s.variance[d] = std::max(m2_[d] / static_cast<double>(count_), kCmvnVarianceFloor);
  s.frame_count = count_;
  return s;
}

CmvnStats estimate_cmvn(std::span<const FeatureMatrix> corpus) {
  if (corpus.empty()) throw std::invalid_argument("cmvn: empty corpus");
  CmvnAccumulator acc(corpus.front().cols);
  for (const auto& f : corpus) acc.add(f);
  return acc.finish();
}

FeatureMatrix apply_cmvn(const FeatureMatrix& features, const CmvnStats& stats) {
  if (features.cols != stats.dim()) throw std::invalid_argument("cmvn: dimension mismatch");
  FeatureMatrix out = features;
  for (std::size_t t = 0; t < out.rows; ++t)
    for (std::size_t d = 0; d < out.cols; ++d)
      out.at(t, d) = (out.at(t, d) - stats.mean[d]) / std::sqrt(stats.variance[d]);
  return out;
}

FeatureMatrix invert_cmvn(const FeatureMatrix& features, const CmvnStats& stats) {
  if (features.cols != stats.dim()) throw std::invalid_argument("cmvn: dimension mismatch");
  FeatureMatrix out = features;
  for (std::size_t t = 0; t < out.rows; ++t)
    for (std::size_t d = 0; d < out.cols; ++d)
      out.at(t, d) = out.at(t, d) * std::sqrt(stats.variance[d]) + stats.mean[d];
  return out;
}

void write_cmvn(const std::filesystem::path& path, const CmvnStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_row(stats.mean) << '\n' << format_row(stats.variance) << '\n' << stats.frame_count << '\n';
}

CmvnStats read_cmvn(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string l1, l2, l3;
  if (!std::getline(in, l1) || !std::getline(in, l2) || !std::getline(in, l3))
    throw std::runtime_error("cmvn file needs three lines: " + path.string());
  CmvnStats s;
  s.mean = parse_row(l1);
  s.variance = parse_row(l2);
  s.frame_count = std::stoull(l3);
  if (s.mean.empty() || s.mean.size() != s.variance.size() || s.frame_count == 0)
    throw std::runtime_error("malformed cmvn file: " + path.string());
  return s;
}

}  // namespace w2vj
