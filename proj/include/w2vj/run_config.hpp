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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "w2vj/finetune.hpp"
#include "w2vj/pretrain.hpp"

namespace w2vj {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ConfigType { String, Path, UInt, Real, Bool, Choice };

struct ConfigKey {
  std::string name;
  ConfigType type = ConfigType::String;
  std::vector<std::string> choices;  // Choice only
  std::string help;
};

/// Every key a run configuration may contain.
const std::vector<ConfigKey>& config_schema();

/// Flat key=value settings validated against config_schema().
class RunConfig {
 public:
  /// One `key = value` per line; blank lines and lines starting with '#' are skipped.
  static RunConfig parse(std::string_view text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Later calls override earlier ones.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string string_or(const std::string& key, const std::string& fallback) const;
  std::uint64_t uint_or(const std::string& key, std::uint64_t fallback) const;
  double real_or(const std::string& key, double fallback) const;
  bool bool_or(const std::string& key, bool fallback) const;
  /// Throws ConfigError naming the key when absent.
  std::string require(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

FrontendKind frontend_kind(const RunConfig& config);
EncoderKind encoder_kind(const RunConfig& config);
MaskPosition mask_position(const RunConfig& config);
/// `model` = base (default) or toy, with the chosen frontend and encoder.
ModelConfig model_config(const RunConfig& config);

/// Recipe selected by `model` (base: full schedule, toy: desk-scale), then per-key overrides.
PretrainConfig pretrain_config(const RunConfig& config);
FinetuneConfig finetune_config(const RunConfig& config);

}  // namespace w2vj
