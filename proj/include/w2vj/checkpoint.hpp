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
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "w2vj/optim.hpp"
#include "w2vj/tensor.hpp"

namespace w2vj {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Format, Checksum, Version, Mismatch, Io };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t step = 0;
  std::optional<double> dev_metric;
};

struct Checkpoint {
  ParameterSet params;
  CheckpointMeta meta;
};

/// Layout: "W2VJ", u32 version, u64 step, u8 has_metric, f64 metric, u32 count, then
/// per entry (name order) u32 name_len, name, u8 dtype (0 = f32, 1 = f64), u32 rank,
/// u64 dims, payload; trailing u32 CRC32 of every preceding byte. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Optimizer moments stored as "m.<name>" / "v.<name>" entries; step in the header.
void save_adam_state(const std::filesystem::path& path, const AdamState& state);
AdamState load_adam_state(const std::filesystem::path& path, const AdamConfig& config);

/// Element-wise mean with FP64 accumulation. Throws CheckpointError(Mismatch) naming the first bad entry.
ParameterSet average_parameters(const std::vector<ParameterSet>& sets);
ParameterSet average_checkpoints(const std::vector<std::filesystem::path>& paths);

struct TopKEntry {
  std::string path;
  std::uint64_t step = 0;
  double dev_metric = 0.0;
};

/// Keeps the k lowest metrics seen so far, ordered best first; ties keep the earlier step.
std::vector<TopKEntry> retain_top_k(std::vector<TopKEntry> store, const TopKEntry& candidate, std::size_t k);

/// Exclusive writer lock on a directory, held for the object's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

/// Top-k checkpoint directory indexed by top_k.json.
class TopKStore {
 public:
  TopKStore(std::filesystem::path dir, std::size_t k);

  /// Saves the candidate if it ranks in the top k and deletes any evicted file.
  /// Returns true when it was retained.
  bool offer(const ParameterSet& params, std::uint64_t step, double dev_metric);
  const std::vector<TopKEntry>& entries() const { return entries_; }
  std::vector<std::filesystem::path> paths() const;

 private:
  void write_index() const;

  std::filesystem::path dir_;
  std::size_t k_;
  std::vector<TopKEntry> entries_;
  DirectoryLock lock_;
};

std::vector<TopKEntry> read_top_k_index(const std::filesystem::path& dir);

}  // namespace w2vj
