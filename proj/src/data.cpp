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

#include "w2vj/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "w2vj/audio.hpp"
#include "w2vj/rng.hpp"

namespace w2vj {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::uint32_t decode_code_point(const std::string& ch) {
  const auto b0 = static_cast<unsigned char>(ch[0]);
  if (ch.size() == 1) return b0;
  std::uint32_t cp = ch.size() == 2 ? (b0 & 0x1F) : ch.size() == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (std::size_t i = 1; i < ch.size(); ++i) cp = (cp << 6) | (static_cast<unsigned char>(ch[i]) & 0x3F);
  return cp;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (!line.empty() && line.back() == '\r') throw DataError(where + ": CRLF line endings are not accepted");
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3 || fields.size() > 4)
      throw DataError(where + ": expected 3 or 4 tab-separated fields, got " + std::to_string(fields.size()));
    ManifestEntry e;
    e.utterance_id = fields[0];
    if (e.utterance_id.empty()) throw DataError(where + ": empty utterance id");
    std::filesystem::path audio(fields[1]);
    if (fields[1].empty()) throw DataError(where + ": empty audio path");
    e.audio_path = (audio.is_absolute() ? audio : base / audio).string();
    try {
      std::size_t consumed = 0;
      const auto v = std::stoull(fields[2], &consumed);
      if (consumed != fields[2].size() || fields[2][0] == '-') throw std::invalid_argument("trailing");
      e.length = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw DataError(where + ": malformed length '" + fields[2] + "'");
    }
    if (e.length == 0) throw DataError(where + ": length must be positive");
    if (fields.size() == 4) e.transcript = fields[3];
    if (!ids.insert(e.utterance_id).second) throw DataError(where + ": duplicate utterance id " + e.utterance_id);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  for (const auto& e : entries) {
    if (e.transcript && e.transcript->find('\t') != std::string::npos)
      throw DataError("transcript of " + e.utterance_id + " contains a tab");
    auto audio = std::filesystem::path(e.audio_path);
    if (!base.empty() && audio.is_absolute() == base.is_absolute()) {
      auto rel = audio.lexically_relative(base);
      if (!rel.empty() && rel.string().rfind("..", 0) != 0) audio = rel;
    }
    out << e.utterance_id << '\t' << audio.generic_string() << '\t' << e.length;
    if (e.transcript) out << '\t' << *e.transcript;
    out << '\n';
  }
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto b = static_cast<unsigned char>(text[i]);
    std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > text.size()) throw DataError("invalid UTF-8 in transcript");
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) throw DataError("invalid UTF-8 in transcript");
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.emplace_back(kBlankToken);
  index_.emplace(std::string(kBlankToken), 0);
  for (auto& t : tokens) {
    if (t.empty() || t.find('\n') != std::string::npos) throw DataError("invalid vocabulary token");
    if (!index_.emplace(t, tokens_.size()).second) throw DataError("duplicate vocabulary token '" + t + "'");
    tokens_.push_back(std::move(t));
  }
}

std::optional<std::size_t> Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& ch : utf8_chars(text)) {
    auto idx = index_of(ch);
    if (!idx || *idx == kBlank) throw DataError("character '" + ch + "' is not covered by the vocabulary");
    ids.push_back(*idx);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == kBlank || id >= tokens_.size()) throw DataError("cannot decode token index " + std::to_string(id));
    out += tokens_[id];
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::string line;
  std::vector<std::string> tokens;
  if (!std::getline(in, line) || line != kBlankToken)
    throw DataError(path.string() + ": first line must be " + std::string(kBlankToken));
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(std::span<const ManifestEntry> entries) {
  std::set<std::uint32_t> seen;
  std::map<std::uint32_t, std::string> chars;
  bool any = false;
  for (const auto& e : entries) {
    if (!e.transcript) continue;
    any = true;
    for (auto& ch : utf8_chars(*e.transcript)) chars.emplace(decode_code_point(ch), ch);
  }
  if (!any || chars.empty()) throw DataError("cannot build a vocabulary from an empty transcript set");
  std::vector<std::string> tokens;
  for (auto& [cp, ch] : chars) tokens.push_back(ch);
  return Vocabulary(std::move(tokens));
}

std::size_t convert_length(std::size_t length, LengthUnit from, LengthUnit to) {
  if (from == to) return length;
  return from == LengthUnit::Samples ? length / kFrameShift : length * kFrameShift;
}

std::size_t seconds_to_length(double seconds, LengthUnit unit) {
  const double per_second = unit == LengthUnit::Samples ? kSampleRate : kSampleRate / static_cast<double>(kFrameShift);
  return static_cast<std::size_t>(std::llround(seconds * per_second));
}

std::size_t Batch::total_length() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }

std::size_t Batch::max_length() const {
  return lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
}

BatchPlan make_batches(std::span<const std::size_t> lengths, std::size_t budget, std::uint64_t seed,
                       std::uint64_t epoch) {
  if (budget == 0) throw std::invalid_argument("batch budget must be positive");
  BatchPlan plan;
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lengths[a] < lengths[b]; });
  Batch current;
  for (auto idx : order) {
    if (lengths[idx] > budget) {
      plan.skipped.push_back(idx);
      continue;
    }
    if (current.total_length() + lengths[idx] > budget) {
      plan.batches.push_back(std::move(current));
      current = {};
    }
    current.indices.push_back(idx);
    current.lengths.push_back(lengths[idx]);
  }
  if (!current.indices.empty()) plan.batches.push_back(std::move(current));
  if (!plan.skipped.empty()) {
    std::cerr << "warning: skipped " << plan.skipped.size() << " entries longer than the batch budget of " << budget
              << '\n';
  }
  auto rng = make_rng(seed, 0x6261746368ULL + epoch);
  std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

std::vector<ManifestEntry> generate_synthetic_corpus(std::size_t n_utts, const Vocabulary& vocab, std::uint64_t seed,
                                                     const std::filesystem::path& out_dir,
                                                     const std::string& manifest_name, const std::string& id_prefix,
                                                     const SynthOptions& options) {
  if (vocab.size() < 3) throw DataError("synthetic corpus needs at least two non-blank tokens");
  std::filesystem::create_directories(out_dir / "wav");
  const auto tone_len = static_cast<std::size_t>(std::llround(options.tone_ms * kSampleRate / 1000.0));
  const double signal_power = options.amplitude * options.amplitude / 2.0;
  const double noise_std = std::sqrt(signal_power / std::pow(10.0, options.snr_db / 10.0));
  std::vector<ManifestEntry> entries;
  for (std::size_t u = 0; u < n_utts; ++u) {
    auto rng = make_rng(seed, 0x73796e7468ULL + u);
    std::uniform_int_distribution<std::size_t> len_dist(options.min_tokens, options.max_tokens);
    std::uniform_int_distribution<std::size_t> tok_dist(1, vocab.size() - 1);
    std::normal_distribution<double> noise(0.0, noise_std);
    std::vector<std::size_t> ids(len_dist(rng));
    for (auto& id : ids) id = tok_dist(rng);

    Waveform wave;
    wave.samples.reserve(ids.size() * tone_len);
    for (auto id : ids) {
      const double hz = synth_tone_hz(id);
      for (std::size_t i = 0; i < tone_len; ++i)
        wave.samples.push_back(options.amplitude *
                               std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate));
    }
    for (auto& s : wave.samples) s += noise(rng);

    char name[64];
    std::snprintf(name, sizeof name, "%s%04zu", id_prefix.c_str(), u);
    const auto wav_path = out_dir / "wav" / (std::string(name) + ".wav");
    write_wav(wav_path, wave);
    ManifestEntry e;
    e.utterance_id = name;
    e.audio_path = wav_path.string();
    e.length = wave.samples.size();
    e.transcript = vocab.decode(ids);
    entries.push_back(std::move(e));
  }
  write_manifest(out_dir / manifest_name, entries);
  return entries;
}

}  // namespace w2vj
