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

#include "w2vj/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <exception>

namespace w2vj {
namespace {

bool is_wav(const std::string& path) {
  return path.size() >= 4 && std::equal(path.end() - 4, path.end(), ".wav", [](char a, char b) {
           return std::tolower(static_cast<unsigned char>(a)) == b;
         });
}

// Runs body(i) for i in [0, n) on `workers` threads and rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

FeatureMatrix load_entry_fbank(const ManifestEntry& entry) {
  if (is_wav(entry.audio_path)) return extract_fbank(read_wav(entry.audio_path));
  return read_features(entry.audio_path);
}

std::vector<ManifestEntry> extract_manifest_features(std::span<const ManifestEntry> entries,
                                                     const std::filesystem::path& out_dir, int workers) {
  std::filesystem::create_directories(out_dir / "feats");
  std::vector<ManifestEntry> written(entries.begin(), entries.end());
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    const auto feats = load_entry_fbank(entries[i]);
    const auto rel = std::filesystem::path("feats") / (entries[i].utterance_id + ".fbk");
    write_features(out_dir / rel, feats);
    written[i].audio_path = rel.string();
    written[i].length = feats.rows;
  });
  return written;
}

CmvnStats estimate_manifest_cmvn(std::span<const ManifestEntry> entries, int workers) {
  if (entries.empty()) throw DataError("cmvn: empty manifest");
  std::vector<FeatureMatrix> feats(entries.size());
  parallel_for(entries.size(), workers, [&](std::size_t i) { feats[i] = load_entry_fbank(entries[i]); });
  CmvnAccumulator acc(feats.front().cols);
  for (const auto& f : feats) acc.add(f);
  return acc.finish();
}

std::vector<Utterance> load_utterances(std::span<const ManifestEntry> entries, const InputOptions& options) {
  std::vector<Utterance> out(entries.size());
  parallel_for(entries.size(), options.workers, [&](std::size_t i) {
    const auto& e = entries[i];
    auto& u = out[i];
    u.id = e.utterance_id;
    if (options.kind == FrontendKind::Wav) {
      if (!is_wav(e.audio_path)) throw DataError(e.utterance_id + ": the WAV frontend needs a .wav input");
      u.input = waveform_tensor(read_wav(e.audio_path));
    } else {
      auto f = load_entry_fbank(e);
      if (options.cmvn) f = apply_cmvn(f, *options.cmvn);
      u.input = feature_tensor(f);
    }
    u.length = u.input.dim(0);
    u.transcript = e.transcript.value_or("");
    if (options.vocab) {
      if (!e.transcript) throw DataError(e.utterance_id + ": transcript required");
      u.target = options.vocab->encode(*e.transcript);
    }
  });
  return out;
}

std::size_t batch_budget(double seconds, FrontendKind kind) {
  return seconds_to_length(seconds, kind == FrontendKind::Wav ? LengthUnit::Samples : LengthUnit::Frames);
}

BatchCursor batch_at_step(std::uint64_t step, std::size_t batches_per_epoch) {
  if (batches_per_epoch == 0) throw DataError("no batches: every utterance exceeds the batch budget");
  return {step / batches_per_epoch, static_cast<std::size_t>(step % batches_per_epoch)};
}

std::vector<std::size_t> batch_for_step(const std::vector<Utterance>& corpus, std::size_t budget, std::uint64_t seed,
                                        std::uint64_t step) {
  std::vector<std::size_t> lengths;
  for (const auto& u : corpus) lengths.push_back(u.length);
  const auto first = make_batches(lengths, budget, seed, 0);
  const auto cursor = batch_at_step(step, first.batches.size());
  const auto plan = cursor.epoch == 0 ? first : make_batches(lengths, budget, seed, cursor.epoch);
  auto indices = plan.batches.at(cursor.batch).indices;
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace w2vj
