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

// w2vj command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "w2vj/checkpoint.hpp"
#include "w2vj/ctc.hpp"
#include "w2vj/finetune.hpp"
#include "w2vj/oracles.hpp"
#include "w2vj/pretrain.hpp"
#include "w2vj/run_config.hpp"

namespace fs = std::filesystem;
using namespace w2vj;

namespace {

enum Exit { kOk = 0, kUsage = 1, kRuntime = 2 };

// Flags shared by every subcommand. Empty strings / unset optionals mean "not given".
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string manifest, vocab, out, frontend, encoder, mask_position;
  std::optional<std::uint64_t> workers;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value config file");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--manifest", f.manifest, "input manifest");
  cmd->add_option("--vocab", f.vocab, "vocabulary file");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--frontend", f.frontend, "wav|fbank");
  cmd->add_option("--encoder", f.encoder, "transformer|conformer");
  cmd->add_option("--mask-position", f.mask_position, "pre|post");
  cmd->add_option("--workers", f.workers, "preprocessing threads");
  cmd->add_option("--set", f.sets, "extra key=value setting (repeatable)");
}

// Defaults < config file < --set < dedicated flags.
RunConfig resolve(const CommonFlags& f, const std::map<std::string, std::string>& extra = {}) {
  RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) c.set("seed", std::to_string(*f.seed));
  if (f.workers) c.set("workers", std::to_string(*f.workers));
  const std::pair<const char*, const std::string*> strings[] = {
      {"manifest", &f.manifest}, {"vocab", &f.vocab},     {"out", &f.out},
      {"frontend", &f.frontend}, {"encoder", &f.encoder}, {"mask_position", &f.mask_position}};
  for (const auto& [key, value] : strings)
    if (!value->empty()) c.set(key, *value);
  for (const auto& [key, value] : extra) c.set(key, value);
  return c;
}

int workers(const RunConfig& c) { return static_cast<int>(c.uint_or("workers", 1)); }

std::optional<CmvnStats> optional_cmvn(const RunConfig& c) {
  if (!c.has("cmvn")) return std::nullopt;
  return read_cmvn(c.require("cmvn"));
}

std::map<std::string, std::string> read_text_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, std::string> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto id = line.substr(0, tab);
    const auto text = tab == std::string::npos ? std::string() : line.substr(tab + 1);
    if (!rows.emplace(id, text).second)
      throw DataError(path.string() + ":" + std::to_string(number) + ": duplicate id '" + id + "'");
  }
  return rows;
}

int cmd_extract_features(const RunConfig& c) {
  const auto entries = load_manifest(c.require("manifest"));
  const fs::path out = c.require("out");
  const auto written = extract_manifest_features(entries, out, workers(c));
  write_manifest(out / "features.tsv", written);
  std::cout << "wrote " << written.size() << " feature files and " << (out / "features.tsv").string() << "\n";
  return kOk;
}

int cmd_estimate_cmvn(const RunConfig& c) {
  const auto entries = load_manifest(c.require("manifest"));
  const fs::path out = c.require("out");
  fs::create_directories(out);
  write_cmvn(out / "cmvn.txt", estimate_manifest_cmvn(entries, workers(c)));
  std::cout << "wrote " << (out / "cmvn.txt").string() << "\n";
  return kOk;
}

int cmd_make_synth(const RunConfig& c) {
  const fs::path out = c.require("out");
  const Vocabulary vocab(utf8_chars(c.string_or("synth_vocab", "abcde")));
  const auto entries = generate_synthetic_corpus(c.uint_or("n", 20), vocab, c.uint_or("seed", 0), out);
  vocab.save(out / "vocab.txt");
  std::cout << "wrote " << entries.size() << " utterances to " << (out / "train.tsv").string() << "\n";
  return kOk;
}

int cmd_pretrain(const RunConfig& c) {
  const auto cfg = pretrain_config(c);
  const auto r = run_pretraining(c.require("manifest"), cfg, c.require("out"), optional_cmvn(c));
  if (!r.metrics.empty()) {
    const auto& m = r.metrics.back();
    std::printf("step %llu loss %.6f contrastive %.6f diversity %.6f\n", static_cast<unsigned long long>(m.step),
                m.loss, m.contrastive, m.diversity);
  }
  if (!r.final_checkpoint.empty()) std::cout << "final checkpoint " << r.final_checkpoint.string() << "\n";
  return kOk;
}

int cmd_finetune(const RunConfig& c) {
  const auto cfg = finetune_config(c);
  FinetuneInputs in;
  in.train_manifest = c.require("manifest");
  in.dev_manifest = c.string_or("dev_manifest", in.train_manifest.string());
  if (c.has("vocab")) in.vocab = c.require("vocab");
  if (c.has("pretrained")) in.pretrained = c.require("pretrained");
  in.cmvn = optional_cmvn(c);
  const auto r = run_finetuning(in, cfg, c.require("out"));
  std::printf("averaged model %s dev_loss %.6f dev_cer %.6f\n", r.averaged_model.string().c_str(), r.averaged_dev_loss,
              r.averaged_dev_cer);
  return kOk;
}

int cmd_average(const RunConfig& c, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ConfigError("average-ckpt needs at least one checkpoint");
  const fs::path out = c.require("out");
  std::vector<fs::path> paths(inputs.begin(), inputs.end());
  CheckpointMeta meta;
  for (const auto& p : paths) meta.step = std::max(meta.step, load_checkpoint(p).meta.step);
  fs::create_directories(out);
  save_checkpoint(out / "average.w2vj", average_checkpoints(paths), meta);
  std::cout << "wrote " << (out / "average.w2vj").string() << "\n";
  return kOk;
}

int cmd_decode(const RunConfig& c) {
  auto cfg = finetune_config(c);
  const auto vocab = Vocabulary::load(c.require("vocab"));
  const auto ckpt = load_checkpoint(c.require("checkpoint"));
  const auto expected = init_finetune_model(cfg.model, vocab.size(), 0);
  for (const auto& [name, t] : expected) {
    if (!ckpt.params.contains(name) || ckpt.params.get(name).shape() != t.shape())
      throw ConfigError("checkpoint does not match the configured model at '" + name +
                        "' (check model, frontend, encoder and vocab)");
  }
  const auto entries = load_manifest(c.require("manifest"));
  InputOptions io;
  io.kind = cfg.model.frontend.kind;
  io.workers = workers(c);
  if (io.kind == FrontendKind::Fbank) io.cmvn = read_cmvn(c.require("cmvn"));
  const auto corpus = load_utterances(entries, io);
  const fs::path out = c.require("out");
  fs::create_directories(out);
  std::ofstream hyp(out / "hyp.tsv");
  for (const auto& utt : corpus) {
    const auto logits = finetune_logits(utt, ckpt.params, cfg, false, 0).detach();
    hyp << utt.id << '\t' << vocab.decode(greedy_decode(logits)) << '\n';
  }
  std::cout << "wrote " << corpus.size() << " hypotheses to " << (out / "hyp.tsv").string() << "\n";
  return kOk;
}

int cmd_score(const RunConfig& c) {
  std::map<std::string, std::string> refs;
  if (c.has("ref")) {
    refs = read_text_table(c.require("ref"));
  } else {
    for (const auto& e : load_manifest(c.require("manifest")))
      refs[e.utterance_id] = e.transcript.value_or("");
  }
  const auto hyps = read_text_table(c.require("hyp"));
  for (const auto& [id, text] : hyps)
    if (!refs.count(id)) throw DataError("hypothesis '" + id + "' has no reference");
  std::vector<TextPair> pairs;
  for (const auto& [id, text] : refs) {
    const auto it = hyps.find(id);
    pairs.push_back({text, it == hyps.end() ? std::string() : it->second});
  }
  const auto unit = c.string_or("unit", "char") == "word" ? ErrorUnit::Word : ErrorUnit::Char;
  const auto stats = score_corpus(pairs, unit, c.bool_or("strip_space", false));
  nlohmann::ordered_json report{{"unit", c.string_or("unit", "char")},
                                {"S", stats.substitutions},
                                {"I", stats.insertions},
                                {"D", stats.deletions},
                                {"N", stats.reference_tokens},
                                {"error_rate", stats.error_rate()}};
  if (c.has("out")) {
    const fs::path out = c.require("out");
    fs::create_directories(out);
    std::ofstream(out / "score.json") << report.dump(2) << "\n";
  }
  std::cout << report.dump() << "\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& c, std::size_t seeds, const std::vector<std::string>& components) {
  for (const auto& name : components) {
    const auto& all = gradient_oracle_components();
    if (std::find(all.begin(), all.end(), name) == all.end())
      throw ConfigError("unknown component '" + name + "'");
  }
  bool ok = true;
  for (const auto& r : run_gradient_oracles(seeds, c.uint_or("seed", 0), components)) {
    std::printf("%-18s seeds=%zu max_rel_err=%.3e %s\n", r.component.c_str(), r.seeds, r.max_rel_error,
                r.passed ? "PASS" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"w2vj: self-supervised speech pretraining and CTC fine-tuning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  CommonFlags flags;
  std::uint64_t n = 0;
  std::string ref, hyp, unit, checkpoint, cmvn, pretrained, dev_manifest;
  bool strip_space = false;
  std::vector<std::string> inputs, components;
  std::size_t seeds = 5;

  auto* extract = app.add_subcommand("extract-features", "compute FBANK features for a WAV manifest");
  auto* estimate = app.add_subcommand("estimate-cmvn", "estimate global CMVN statistics");
  auto* synth = app.add_subcommand("make-synth", "generate the synthetic tone corpus");
  auto* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining");
  auto* finetune = app.add_subcommand("finetune", "CTC fine-tuning with top-k averaging");
  auto* average = app.add_subcommand("average-ckpt", "average checkpoints element-wise");
  auto* decode = app.add_subcommand("decode", "greedy CTC decoding to TSV");
  auto* score = app.add_subcommand("score", "character or word error rate");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient oracles");
  for (auto* cmd : {extract, estimate, synth, pretrain, finetune, average, decode, score, gradcheck})
    add_common(cmd, flags);

  synth->add_option("--n", n, "number of utterances");
  for (auto* cmd : {pretrain, finetune, decode}) cmd->add_option("--cmvn", cmvn, "CMVN statistics file");
  finetune->add_option("--dev-manifest", dev_manifest, "dev manifest");
  finetune->add_option("--pretrained", pretrained, "pretraining checkpoint");
  decode->add_option("--checkpoint", checkpoint, "fine-tuned checkpoint");
  average->add_option("inputs", inputs, "checkpoints to average")->required();
  score->add_option("--ref", ref, "reference TSV");
  score->add_option("--hyp", hyp, "hypothesis TSV");
  score->add_option("--unit", unit, "char|word");
  score->add_flag("--strip-space", strip_space, "ignore whitespace in character scoring");
  gradcheck->add_option("--seeds", seeds, "seeds per component")->check(CLI::PositiveNumber);
  gradcheck->add_option("--component", components, "restrict to these components");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    std::map<std::string, std::string> extra;
    if (synth->parsed() && n > 0) extra["n"] = std::to_string(n);
    if (!cmvn.empty()) extra["cmvn"] = cmvn;
    if (!dev_manifest.empty()) extra["dev_manifest"] = dev_manifest;
    if (!pretrained.empty()) extra["pretrained"] = pretrained;
    if (!checkpoint.empty()) extra["checkpoint"] = checkpoint;
    if (!ref.empty()) extra["ref"] = ref;
    if (!hyp.empty()) extra["hyp"] = hyp;
    if (!unit.empty()) extra["unit"] = unit;
    if (strip_space) extra["strip_space"] = "true";
    const auto config = resolve(flags, extra);

    if (extract->parsed()) return cmd_extract_features(config);
    if (estimate->parsed()) return cmd_estimate_cmvn(config);
    if (synth->parsed()) return cmd_make_synth(config);
    if (pretrain->parsed()) return cmd_pretrain(config);
    if (finetune->parsed()) return cmd_finetune(config);
    if (average->parsed()) return cmd_average(config, inputs);
    if (decode->parsed()) return cmd_decode(config);
    if (score->parsed()) return cmd_score(config);
    if (gradcheck->parsed()) return cmd_gradcheck(config, seeds, components);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
