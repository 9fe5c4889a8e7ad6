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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace w2vj {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string utterance_id;
  std::string audio_path;  // resolved against the manifest's directory
  std::size_t length = 0;  // samples for WAV entries, frames for feature entries
  std::optional<std::string> transcript;
};

/// `utt_id<TAB>path<TAB>length[<TAB>transcript]`, UTF-8, LF line endings.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

/// Splits UTF-8 text into Unicode scalar values, each returned as its UTF-8 bytes.
std::vector<std::string> utf8_chars(std::string_view text);

/// Character vocabulary with the CTC blank fixed at index 0.
class Vocabulary {
 public:
  static constexpr std::size_t kBlank = 0;
  static constexpr std::string_view kBlankToken = "<blank>";

  Vocabulary() = default;
  /// `tokens` excludes the blank.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<std::size_t> index_of(const std::string& token) const;

  std::vector<std::size_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::size_t> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

/// Sorted unique characters of every transcript (by code point), blank prepended.
Vocabulary build_vocab(std::span<const ManifestEntry> entries);

enum class LengthUnit { Samples, Frames };

/// Converts between sample and 10 ms frame units (160 samples per frame).
std::size_t convert_length(std::size_t length, LengthUnit from, LengthUnit to);
std::size_t seconds_to_length(double seconds, LengthUnit unit);

/// One batch: entry indices plus their true lengths; positions past a length are padding.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> lengths;

  std::size_t total_length() const;
  std::size_t max_length() const;
  bool is_padding(std::size_t member, std::size_t position) const { return position >= lengths.at(member); }
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::vector<std::size_t> skipped;  // entries longer than the budget
};

/// Length-sorted greedy packing under `budget`, then a shuffle of the batch
/// order that is a pure function of (seed, epoch).
BatchPlan make_batches(std::span<const std::size_t> lengths, std::size_t budget, std::uint64_t seed,
                       std::uint64_t epoch = 0);

struct SynthOptions {
  double tone_ms = 120.0;
  double amplitude = 0.5;
  double snr_db = 30.0;
  std::size_t min_tokens = 2;
  std::size_t max_tokens = 10;
};

inline double synth_tone_hz(std::size_t token_index) { return 300.0 + 40.0 * static_cast<double>(token_index); }

/// Writes `<out_dir>/wav/<id>.wav` plus `<out_dir>/<manifest_name>` and
/// returns the entries. Token k of the vocabulary is a pure tone at 300+40k Hz.
std::vector<ManifestEntry> generate_synthetic_corpus(std::size_t n_utts, const Vocabulary& vocab, std::uint64_t seed,
                                                     const std::filesystem::path& out_dir,
                                                     const std::string& manifest_name = "train.tsv",
                                                     const std::string& id_prefix = "utt",
                                                     const SynthOptions& options = {});

}  // namespace w2vj
