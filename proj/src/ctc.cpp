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

#include "w2vj/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "w2vj/data.hpp"

namespace w2vj {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

std::vector<double> log_softmax(std::span<const double> x, std::size_t frames, std::size_t vocab) {
  std::vector<double> out(frames * vocab);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* row = x.data() + t * vocab;
    const double m = *std::max_element(row, row + vocab);
    double s = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) s += std::exp(row[v] - m);
    const double lse = m + std::log(s);
    for (std::size_t v = 0; v < vocab; ++v) out[t * vocab + v] = row[v] - lse;
  }
  return out;
}

void check_target(std::span<const std::size_t> target, std::size_t vocab) {
  for (auto k : target)
    if (k == kCtcBlank || k >= vocab) throw CtcError("ctc: target index " + std::to_string(k) + " outside [1, vocab)");
}

}  // namespace

std::size_t ctc_min_frames(std::span<const std::size_t> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

bool ctc_admissible(std::size_t frames, std::span<const std::size_t> target) {
  return frames >= ctc_min_frames(target);
}

Tensor ctc_loss(const Tensor& logits, std::span<const std::size_t> target, std::size_t valid) {
  if (logits.rank() != 2) throw CtcError("ctc: logits must be [T, V]");
  const std::size_t vocab = logits.dim(1);
  const std::size_t frames = (valid == 0 || valid > logits.dim(0)) ? logits.dim(0) : valid;
  check_target(target, vocab);
  if (!ctc_admissible(frames, target))
    throw CtcError("ctc: " + std::to_string(frames) + " frames cannot emit a target needing " +
                   std::to_string(ctc_min_frames(target)));

  const auto lp = log_softmax(logits.data(), frames, vocab);
  const std::size_t s_len = 2 * target.size() + 1;
  std::vector<std::size_t> ext(s_len, kCtcBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != kCtcBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(frames * s_len, kNegInf), beta(frames * s_len, kNegInf);
  alpha[0] = lp[ext[0]];
  if (s_len > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double a = alpha[(t - 1) * s_len + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * s_len + s - 1]);
      if (skip_ok(s)) a = log_add(a, alpha[(t - 1) * s_len + s - 2]);
      alpha[t * s_len + s] = a == kNegInf ? kNegInf : a + lp[t * vocab + ext[s]];
    }
  }
  const std::size_t last = (frames - 1) * s_len;
  beta[last + s_len - 1] = lp[(frames - 1) * vocab + ext[s_len - 1]];
  if (s_len > 1) beta[last + s_len - 2] = lp[(frames - 1) * vocab + ext[s_len - 2]];
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double b = beta[(t + 1) * s_len + s];
      if (s + 1 < s_len) b = log_add(b, beta[(t + 1) * s_len + s + 1]);
      if (s + 2 < s_len && skip_ok(s + 2)) b = log_add(b, beta[(t + 1) * s_len + s + 2]);
      beta[t * s_len + s] = b == kNegInf ? kNegInf : b + lp[t * vocab + ext[s]];
    }
  }
  double log_z = alpha[last + s_len - 1];
  if (s_len > 1) log_z = log_add(log_z, alpha[last + s_len - 2]);
  if (!std::isfinite(log_z)) throw CtcError("ctc: target has zero probability");

  // d(-log Z)/d logit[t,k] = softmax[t,k] - occupancy[t,k].
  std::vector<double> grad(logits.numel(), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t v = 0; v < vocab; ++v) grad[t * vocab + v] = std::exp(lp[t * vocab + v]);
    for (std::size_t s = 0; s < s_len; ++s) {
      const double a = alpha[t * s_len + s], b = beta[t * s_len + s];
      if (a == kNegInf || b == kNegInf) continue;
      grad[t * vocab + ext[s]] -= std::exp(a + b - lp[t * vocab + ext[s]] - log_z);
    }
  }
  return Tensor::make({1}, {-log_z}, {logits}, [grad = std::move(grad)](detail::Node& self) {
    auto& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    for (std::size_t i = 0; i < grad.size(); ++i) parent.grad[i] += self.grad[0] * grad[i];
  });
}

double ctc_loss_bruteforce(std::span<const double> logits, std::size_t frames, std::size_t vocab,
                           std::span<const std::size_t> target) {
  if (frames == 0 || vocab == 0) throw CtcError("ctc oracle: empty instance");
  double count = 1.0;
  for (std::size_t t = 0; t < frames; ++t) count *= static_cast<double>(vocab);
  if (count > 1e6) throw CtcError("ctc oracle: instance too large to enumerate");
  check_target(target, vocab);
  const auto lp = log_softmax(logits, frames, vocab);
  std::vector<std::size_t> path(frames, 0);
  std::vector<std::size_t> collapsed;
  double total = kNegInf;
  for (std::size_t n = 0; n < static_cast<std::size_t>(count); ++n) {
    std::size_t rem = n;
    for (std::size_t t = 0; t < frames; ++t) {
      path[t] = rem % vocab;
      rem /= vocab;
    }
    collapsed.clear();
    for (std::size_t t = 0; t < frames; ++t)
      if (path[t] != kCtcBlank && (t == 0 || path[t] != path[t - 1])) collapsed.push_back(path[t]);
    if (!std::equal(collapsed.begin(), collapsed.end(), target.begin(), target.end())) continue;
    double lpath = 0.0;
    for (std::size_t t = 0; t < frames; ++t) lpath += lp[t * vocab + path[t]];
    total = log_add(total, lpath);
  }
  return total == kNegInf ? std::numeric_limits<double>::infinity() : -total;
}

std::vector<std::size_t> greedy_decode(std::span<const double> logits, std::size_t frames, std::size_t vocab) {
  std::vector<std::size_t> out;
  std::size_t prev = kCtcBlank;
  for (std::size_t t = 0; t < frames; ++t) {
    const double* row = logits.data() + t * vocab;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + vocab) - row);
    if (best != kCtcBlank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

std::vector<std::size_t> greedy_decode(const Tensor& logits, std::size_t valid) {
  const std::size_t frames = (valid == 0 || valid > logits.dim(0)) ? logits.dim(0) : valid;
  return greedy_decode(logits.data(), frames, logits.dim(1));
}

EditCounts edit_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1, at(i, j - 1) + 1});
  EditCounts e;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++e.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

void ErrorStats::add(const EditCounts& e, std::size_t ref_tokens) {
  substitutions += e.substitutions;
  insertions += e.insertions;
  deletions += e.deletions;
  reference_tokens += ref_tokens;
}

void ErrorStats::merge(const ErrorStats& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_tokens += o.reference_tokens;
}

double ErrorStats::error_rate() const {
  if (reference_tokens == 0) throw std::invalid_argument("error rate: all references are empty");
  return static_cast<double>(substitutions + insertions + deletions) / static_cast<double>(reference_tokens);
}

std::vector<std::string> tokenize(std::string_view text, ErrorUnit unit, bool strip_space) {
  std::vector<std::string> out;
  if (unit == ErrorUnit::Char) {
    for (auto& c : utf8_chars(text))
      if (!(strip_space && c == " ")) out.push_back(std::move(c));
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(' ', start), text.size());
    if (end > start) out.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

ErrorStats score_corpus(const std::vector<TextPair>& pairs, ErrorUnit unit, bool strip_space) {
  ErrorStats stats;
  for (const auto& p : pairs) {
    const auto ref = tokenize(p.reference, unit, strip_space);
    stats.add(edit_distance(ref, tokenize(p.hypothesis, unit, strip_space)), ref.size());
  }
  if (stats.reference_tokens == 0) throw std::invalid_argument("error rate: all references are empty");
  return stats;
}

double error_rate(const std::vector<TextPair>& pairs, ErrorUnit unit, bool strip_space) {
  return score_corpus(pairs, unit, strip_space).error_rate();
}

}  // namespace w2vj
