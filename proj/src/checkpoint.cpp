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

#include "w2vj/checkpoint.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "w2vj/binary_io.hpp"

namespace w2vj {
namespace fs = std::filesystem;
namespace {

constexpr char kMagic[4] = {'W', '2', 'V', 'J'};

std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(n)));
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed for " + tmp);
  }
  fs::rename(tmp, path);
}

std::vector<std::uint8_t> encode(const ParameterSet& params, const CheckpointMeta& meta) {
  io::ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(meta.step);
  w.put<std::uint8_t>(meta.dev_metric ? 1 : 0);
  w.put<double>(meta.dev_metric.value_or(0.0));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    for (double v : t.data()) w.put<double>(v);
  }
  auto bytes = std::move(w.bytes());
  const auto crc = crc32_of(bytes, bytes.size());
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return bytes;
}

Checkpoint decode(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(Kind::Format, source + ": not a w2vj checkpoint (bad magic)");
  if (bytes.size() < 8) throw CheckpointError(Kind::Checksum, source + ": truncated file");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes, body) != stored) throw CheckpointError(Kind::Checksum, source + ": checksum mismatch");

  io::ByteReader r(bytes.data(), body);
  Checkpoint ck;
  try {
    char magic[4];
    r.get_bytes(magic, 4);
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw CheckpointError(Kind::Version, source + ": unsupported version " + std::to_string(version));
    ck.meta.step = r.get<std::uint64_t>();
    const bool has_metric = r.get<std::uint8_t>() != 0;
    const double metric = r.get<double>();
    if (has_metric) ck.meta.dev_metric = metric;
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t e = 0; e < count; ++e) {
      const auto len = r.get<std::uint32_t>();
      std::string name(len, '\0');
      r.get_bytes(name.data(), len);
      const auto dtype = r.get<std::uint8_t>();
      if (dtype > 1) throw CheckpointError(Kind::Format, source + ": unknown dtype for " + name);
      const auto rank = r.get<std::uint32_t>();
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      std::vector<double> values(shape_numel(shape));
      for (auto& v : values) v = dtype == 1 ? r.get<double>() : static_cast<double>(r.get<float>());
      ck.params.add(name, Tensor::from(std::move(shape), std::move(values)));
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::Format, source + ": malformed payload (" + e.what() + ")");
  }
  return ck;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const fs::path& path, const ParameterSet& params, const CheckpointMeta& meta) {
  write_file_atomic(path, encode(params, meta));
}

Checkpoint load_checkpoint(const fs::path& path) { return decode(read_all(path), path.string()); }

void save_adam_state(const fs::path& path, const AdamState& state) {
  ParameterSet moments;
  for (const auto& [name, m] : state.m) moments.add("m." + name, Tensor::from({m.size()}, m));
  for (const auto& [name, v] : state.v) moments.add("v." + name, Tensor::from({v.size()}, v));
  save_checkpoint(path, moments, {state.step, std::nullopt});
}

AdamState load_adam_state(const fs::path& path, const AdamConfig& config) {
  auto ck = load_checkpoint(path);
  AdamState state;
  state.config = config;
  state.step = ck.meta.step;
  for (const auto& [name, t] : ck.params) {
    std::vector<double> values(t.data().begin(), t.data().end());
    if (name.rfind("m.", 0) == 0)
      state.m[name.substr(2)] = std::move(values);
    else if (name.rfind("v.", 0) == 0)
      state.v[name.substr(2)] = std::move(values);
    else
      throw CheckpointError(CheckpointError::Kind::Format, path.string() + ": unexpected optimizer entry " + name);
  }
  return state;
}

ParameterSet average_parameters(const std::vector<ParameterSet>& sets) {
  using Kind = CheckpointError::Kind;
  if (sets.empty()) throw CheckpointError(Kind::Mismatch, "average: no checkpoints");
  const auto& first = sets.front();
  for (std::size_t i = 1; i < sets.size(); ++i) {
    for (const auto& [name, t] : first) {
      if (!sets[i].contains(name)) throw CheckpointError(Kind::Mismatch, "average: missing entry " + name);
      if (sets[i].get(name).shape() != t.shape()) throw CheckpointError(Kind::Mismatch, "average: shape mismatch at " + name);
    }
    for (const auto& [name, t] : sets[i])
      if (!first.contains(name)) throw CheckpointError(Kind::Mismatch, "average: unexpected entry " + name);
  }
  ParameterSet out;
  const double n = static_cast<double>(sets.size());
  for (const auto& [name, t] : first) {
    std::vector<double> acc(t.numel(), 0.0);
    std::vector<double> column(sets.size());
    std::vector<std::span<const double>> views;
    for (const auto& set : sets) views.push_back(set.get(name).data());
    for (std::size_t i = 0; i < acc.size(); ++i) {
      // Summing in sorted order makes the mean independent of file order.
      for (std::size_t k = 0; k < sets.size(); ++k) column[k] = views[k][i];
      std::sort(column.begin(), column.end());
      for (double x : column) acc[i] += x;
      acc[i] /= n;
    }
    out.add(name, Tensor::from(t.shape(), std::move(acc)));
  }
  return out;
}

ParameterSet average_checkpoints(const std::vector<fs::path>& paths) {
  std::vector<ParameterSet> sets;
  for (const auto& p : paths) sets.push_back(load_checkpoint(p).params);
  return average_parameters(sets);
}

std::vector<TopKEntry> retain_top_k(std::vector<TopKEntry> store, const TopKEntry& candidate, std::size_t k) {
  store.push_back(candidate);
  std::stable_sort(store.begin(), store.end(), [](const TopKEntry& a, const TopKEntry& b) {
    if (a.dev_metric != b.dev_metric) return a.dev_metric < b.dev_metric;
    return a.step < b.step;
  });
  if (store.size() > k) store.resize(k);
  return store;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
  if (fd_ < 0) throw CheckpointError(CheckpointError::Kind::Io, "cannot create lock " + path_.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw CheckpointError(CheckpointError::Kind::Io, "store " + dir.string() + " is locked by another writer");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

TopKStore::TopKStore(fs::path dir, std::size_t k) : dir_(std::move(dir)), k_(k), lock_(dir_) {
  if (k_ == 0) throw std::invalid_argument("top-k store: k must be positive");
  if (fs::exists(dir_ / "top_k.json")) entries_ = read_top_k_index(dir_);
}

bool TopKStore::offer(const ParameterSet& params, std::uint64_t step, double dev_metric) {
  const TopKEntry candidate{"ckpt_step" + std::to_string(step) + ".w2vj", step, dev_metric};
  auto next = retain_top_k(entries_, candidate, k_);
  const bool kept = std::any_of(next.begin(), next.end(), [&](const TopKEntry& e) { return e.step == step; });
  if (kept) save_checkpoint(dir_ / candidate.path, params, {step, dev_metric});
  for (const auto& old : entries_) {
    const bool still = std::any_of(next.begin(), next.end(), [&](const TopKEntry& e) { return e.path == old.path; });
    if (!still) fs::remove(dir_ / old.path);
  }
  entries_ = std::move(next);
  write_index();
  return kept;
}

std::vector<fs::path> TopKStore::paths() const {
  std::vector<fs::path> out;
  for (const auto& e : entries_) out.push_back(dir_ / e.path);
  return out;
}

void TopKStore::write_index() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries_) j.push_back({{"path", e.path}, {"step", e.step}, {"dev_metric", e.dev_metric}});
  const auto text = j.dump(2) + "\n";
  write_file_atomic(dir_ / "top_k.json", std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<TopKEntry> read_top_k_index(const fs::path& dir) {
  std::ifstream in(dir / "top_k.json");
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + (dir / "top_k.json").string());
  std::vector<TopKEntry> out;
  try {
    for (const auto& e : nlohmann::json::parse(in))
      out.push_back({e.at("path").get<std::string>(), e.at("step").get<std::uint64_t>(), e.at("dev_metric").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::Format, "top_k.json: " + std::string(e.what()));
  }
  return out;
}

}  // namespace w2vj
