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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "w2vj/audio.hpp"
#include "w2vj/data.hpp"
#include "w2vj/frontend.hpp"

namespace w2vj {

/// One utterance ready for the frontend.
struct Utterance {
  std::string id;
  Tensor input;             // [L, 1] samples or [T, 80] normalized FBANK
  std::size_t length = 0;   // rows of `input`
  std::string transcript;
  std::vector<std::size_t> target;  // vocabulary ids; empty without a vocabulary
};

struct InputOptions {
  FrontendKind kind = FrontendKind::Fbank;
  std::optional<CmvnStats> cmvn;  // FBANK only; applied when present
  const Vocabulary* vocab = nullptr;
  int workers = 1;
};

/// FBANK of a manifest entry: extracted from a .wav file, or read from a W2VF feature file.
FeatureMatrix load_entry_fbank(const ManifestEntry& entry);

/// Global CMVN over every entry of a manifest.
/// Writes <out_dir>/feats/<id>.fbk for every entry and returns matching entries
/// (paths relative to out_dir, lengths in frames).
std::vector<ManifestEntry> extract_manifest_features(std::span<const ManifestEntry> entries,
                                                     const std::filesystem::path& out_dir, int workers = 1);

CmvnStats estimate_manifest_cmvn(std::span<const ManifestEntry> entries, int workers = 1);

/// Loads every entry in manifest order. `workers` threads share the decoding work;
/// the result does not depend on the worker count.
std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const InputOptions& options);

/// Input rows that fit in `seconds` of audio for the given frontend.
std::size_t batch_budget(double seconds, FrontendKind kind);

/// Index of the batch used at `step` (0-based) and its epoch: batches are
/// reshuffled every epoch and the number of batches per epoch is fixed.
struct BatchCursor {
  std::uint64_t epoch = 0;
  std::size_t batch = 0;
};
BatchCursor batch_at_step(std::uint64_t step, std::size_t batches_per_epoch);

/// Entry indices of the batch used at `step`, sorted ascending.
std::vector<std::size_t> batch_for_step(const std::vector<Utterance>& corpus, std::size_t budget, std::uint64_t seed,
                                        std::uint64_t step);

}  // namespace w2vj
