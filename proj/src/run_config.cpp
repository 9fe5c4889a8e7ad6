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

#include "w2vj/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace w2vj {

namespace {

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_uint(const std::string& s, std::uint64_t& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_real(const std::string& s, double& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes") return out = true, true;
  if (s == "false" || s == "0" || s == "no") return out = false, true;
  return false;
}

void validate_value(const ConfigKey& key, const std::string& value) {
  std::uint64_t u = 0;
  double d = 0.0;
  bool b = false;
  bool ok = true;
  switch (key.type) {
    case ConfigType::String:
    case ConfigType::Path: ok = !value.empty(); break;
    case ConfigType::UInt: ok = parse_uint(value, u) && (u > 0 || key.name != "workers"); break;
    case ConfigType::Real: ok = parse_real(value, d); break;
    case ConfigType::Bool: ok = parse_bool(value, b); break;
    case ConfigType::Choice: ok = std::find(key.choices.begin(), key.choices.end(), value) != key.choices.end(); break;
  }
  if (ok) return;
  std::string expected;
  switch (key.type) {
    case ConfigType::String:
    case ConfigType::Path: expected = "a non-empty value"; break;
    case ConfigType::UInt: expected = "an unsigned integer"; break;
    case ConfigType::Real: expected = "a finite number"; break;
    case ConfigType::Bool: expected = "true or false"; break;
    case ConfigType::Choice:
      for (const auto& c : key.choices) expected += (expected.empty() ? "" : "|") + c;
      break;
  }
  throw ConfigError("config key '" + key.name + "': got '" + value + "', expected " + expected);
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  using T = ConfigType;
  static const std::vector<ConfigKey> schema{
      {"seed", T::UInt, {}, "seed for every random draw"},
      {"workers", T::UInt, {}, "threads for utterance preprocessing"},
      {"manifest", T::Path, {}, "input manifest (training set for pretrain/finetune)"},
      {"dev_manifest", T::Path, {}, "fine-tuning dev manifest; defaults to the training manifest"},
      {"vocab", T::Path, {}, "character vocabulary file"},
      {"out", T::Path, {}, "output directory"},
      {"frontend", T::Choice, {"wav", "fbank"}, "convolutional frontend"},
      {"encoder", T::Choice, {"transformer", "conformer"}, "context encoder"},
      {"mask_position", T::Choice, {"pre", "post"}, "fine-tuning masking position"},
      {"model", T::Choice, {"base", "toy"}, "model size and training recipe"},
      {"pretrained", T::Path, {}, "pretraining checkpoint used to initialize fine-tuning"},
      {"checkpoint", T::Path, {}, "fine-tuned checkpoint for decoding"},
      {"cmvn", T::Path, {}, "CMVN statistics file"},
      {"max_steps", T::UInt, {}, "number of updates"},
      {"stop_at_step", T::UInt, {}, "end pretraining early at this update (resumable)"},
      {"lr", T::Real, {}, "peak learning rate"},
      {"batch_seconds", T::Real, {}, "audio seconds per batch"},
      {"eval_every", T::UInt, {}, "fine-tuning evaluation interval"},
      {"keep_top", T::UInt, {}, "checkpoints kept for averaging"},
      {"checkpoint_every", T::UInt, {}, "pretraining checkpoint interval"},
      {"mask_prob", T::Real, {}, "pretraining span start probability"},
      {"mask_span", T::UInt, {}, "pretraining span length in frames"},
      {"distractors", T::UInt, {}, "distractors per masked frame"},
      {"kappa", T::Real, {}, "contrastive temperature"},
      {"diversity_weight", T::Real, {}, "weight of the diversity loss"},
      {"frontend_grad_scale", T::Real, {}, "gradient multiplier on the frontend during pretraining"},
      {"log_wall_time", T::Bool, {}, "add wall_ms to metric log lines"},
      {"n", T::UInt, {}, "synthetic corpus size"},
      {"synth_vocab", T::String, {}, "characters of the synthetic corpus"},
      {"unit", T::Choice, {"char", "word"}, "scoring unit"},
      {"strip_space", T::Bool, {}, "drop whitespace before character scoring"},
      {"ref", T::Path, {}, "reference transcripts (TSV id<TAB>text)"},
      {"hyp", T::Path, {}, "hypotheses (TSV id<TAB>text)"},
  };
  return schema;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& source) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(number) + ": expected key=value, got '" + t + "'");
    try {
      c.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* k = find_key(key);
  if (k == nullptr) throw ConfigError("unknown config key '" + key + "'");
  validate_value(*k, value);
  values_[key] = value;
}

std::string RunConfig::string_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::uint64_t RunConfig::uint_or(const std::string& key, std::uint64_t fallback) const {
  std::uint64_t v = fallback;
  if (has(key)) parse_uint(values_.at(key), v);
  return v;
}

double RunConfig::real_or(const std::string& key, double fallback) const {
  double v = fallback;
  if (has(key)) parse_real(values_.at(key), v);
  return v;
}

bool RunConfig::bool_or(const std::string& key, bool fallback) const {
  bool v = fallback;
  if (has(key)) parse_bool(values_.at(key), v);
  return v;
}

std::string RunConfig::require(const std::string& key) const {
  if (!has(key)) throw ConfigError("missing required setting '" + key + "'");
  return values_.at(key);
}

FrontendKind frontend_kind(const RunConfig& config) {
  return config.string_or("frontend", "fbank") == "wav" ? FrontendKind::Wav : FrontendKind::Fbank;
}

EncoderKind encoder_kind(const RunConfig& config) {
  return config.string_or("encoder", "transformer") == "conformer" ? EncoderKind::Conformer : EncoderKind::Transformer;
}

MaskPosition mask_position(const RunConfig& config) {
  return config.string_or("mask_position", "post") == "pre" ? MaskPosition::Pre : MaskPosition::Post;
}

namespace {

bool toy(const RunConfig& config) { return config.string_or("model", "base") == "toy"; }

void apply_schedule(const RunConfig& config, LrSchedule& schedule, std::int64_t& max_steps) {
  if (config.has("max_steps")) {
    max_steps = static_cast<std::int64_t>(config.uint_or("max_steps", 0));
    schedule.total_steps = max_steps;
  }
  schedule.peak = config.real_or("lr", schedule.peak);
}

}  // namespace

ModelConfig model_config(const RunConfig& config) {
  return toy(config) ? ModelConfig::toy(frontend_kind(config), encoder_kind(config))
                     : ModelConfig::base(frontend_kind(config), encoder_kind(config));
}

PretrainConfig pretrain_config(const RunConfig& config) {
  PretrainConfig c;
  if (toy(config)) {
    c = PretrainConfig::toy(frontend_kind(config), encoder_kind(config));
  } else {
    c.model = model_config(config);
  }
  apply_schedule(config, c.schedule, c.max_steps);
  c.stop_at_step = static_cast<std::int64_t>(config.uint_or("stop_at_step", 0));
  c.mask_start_prob = config.real_or("mask_prob", c.mask_start_prob);
  c.mask_span = config.uint_or("mask_span", c.mask_span);
  c.distractors = config.uint_or("distractors", c.distractors);
  c.kappa = config.real_or("kappa", c.kappa);
  c.diversity_weight = config.real_or("diversity_weight", c.diversity_weight);
  c.frontend_grad_scale = config.real_or("frontend_grad_scale", c.frontend_grad_scale);
  c.batch_seconds = config.real_or("batch_seconds", c.batch_seconds);
  c.checkpoint_every = static_cast<std::int64_t>(config.uint_or("checkpoint_every", c.checkpoint_every));
  c.seed = config.uint_or("seed", c.seed);
  c.workers = static_cast<int>(config.uint_or("workers", 1));
  c.log_wall_time = config.bool_or("log_wall_time", c.log_wall_time);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

FinetuneConfig finetune_config(const RunConfig& config) {
  FinetuneConfig c;
  if (toy(config)) {
    c = FinetuneConfig::toy(frontend_kind(config), encoder_kind(config), mask_position(config));
  } else {
    c.model = model_config(config);
    c.masking.position = mask_position(config);
  }
  apply_schedule(config, c.schedule, c.max_steps);
  c.eval_every = static_cast<std::int64_t>(config.uint_or("eval_every", c.eval_every));
  c.keep_top = config.uint_or("keep_top", c.keep_top);
  c.batch_seconds = config.real_or("batch_seconds", c.batch_seconds);
  c.seed = config.uint_or("seed", c.seed);
  c.workers = static_cast<int>(config.uint_or("workers", 1));
  c.log_wall_time = config.bool_or("log_wall_time", c.log_wall_time);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace w2vj
