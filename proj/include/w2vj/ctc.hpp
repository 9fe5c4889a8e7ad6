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

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "w2vj/tensor.hpp"

namespace w2vj {

class CtcError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kCtcBlank = 0;

/// Frames needed to emit `target`: its length plus one per adjacent repeat.
std::size_t ctc_min_frames(std::span<const std::size_t> target);
bool ctc_admissible(std::size_t frames, std::span<const std::size_t> target);

/// Negative log-likelihood of `target` under logits [T, V] (blank = 0), using the
/// first `valid` rows (0 = all). Throws CtcError for inadmissible targets.
Tensor ctc_loss(const Tensor& logits, std::span<const std::size_t> target, std::size_t valid = 0);

/// Oracle: enumerates all V^T frame labelings. Returns +inf when no labeling
/// collapses to `target`. Throws CtcError when V^T exceeds 1e6.
double ctc_loss_bruteforce(std::span<const double> logits, std::size_t frames, std::size_t vocab,
                           std::span<const std::size_t> target);

/// Per-frame argmax (ties to the lower index), repeats collapsed, blanks dropped.
std::vector<std::size_t> greedy_decode(std::span<const double> logits, std::size_t frames, std::size_t vocab);
std::vector<std::size_t> greedy_decode(const Tensor& logits, std::size_t valid = 0);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
};

/// Unit-cost Levenshtein alignment; the backtrace prefers substitution, then deletion, then insertion.
EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

enum class ErrorUnit { Char, Word };

struct ErrorStats {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_tokens = 0;

  void add(const EditCounts& e, std::size_t ref_tokens);
  void merge(const ErrorStats& other);
  double error_rate() const;
};

/// Characters are UTF-8 scalar values; words are split on spaces.
std::vector<std::string> tokenize(std::string_view text, ErrorUnit unit, bool strip_space = false);

struct TextPair {
  std::string reference;
  std::string hypothesis;
};

/// Corpus-pooled (S+I+D)/N. Throws std::invalid_argument when every reference is empty.
ErrorStats score_corpus(const std::vector<TextPair>& pairs, ErrorUnit unit, bool strip_space = false);
double error_rate(const std::vector<TextPair>& pairs, ErrorUnit unit, bool strip_space = false);

}  // namespace w2vj
