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

#include <gtest/gtest.h>

#include "w2vj/run_config.hpp"

namespace w2vj {
namespace {

TEST(RunConfig, ParsesCommentsAndWhitespace) {
  const auto c = RunConfig::parse("# recipe\n\nmodel = toy\n  seed=4  \nlr = 1e-3\n");
  EXPECT_EQ(c.string_or("model", ""), "toy");
  EXPECT_EQ(c.uint_or("seed", 0), 4u);
  EXPECT_EQ(c.real_or("lr", 0.0), 1e-3);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(RunConfig::parse("colour = red\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("seed = -1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("lr = fast\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("frontend = mfcc\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("workers = 0\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("log_wall_time = maybe\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("just a line\n"), ConfigError);
  try {
    RunConfig::parse("seed = 1\nmax_steps = x\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
  }
}

TEST(RunConfig, LaterSettingsWin) {
  auto c = RunConfig::parse("seed = 1\n");
  c.set("seed", "9");
  EXPECT_EQ(c.uint_or("seed", 0), 9u);
  EXPECT_THROW(c.require("manifest"), ConfigError);
}

TEST(RunConfig, BaseRecipeDefaults) {
  const RunConfig c;
  const auto p = pretrain_config(c);
  EXPECT_EQ(p.model.encoder.dim, 768u);
  EXPECT_EQ(p.max_steps, 400000);
  EXPECT_EQ(p.distractors, 100u);
  const auto f = finetune_config(c);
  EXPECT_EQ(f.masking.position, MaskPosition::Post);
  EXPECT_EQ(f.eval_every, 1600);
}

TEST(RunConfig, ToyRecipeWithOverrides) {
  const auto c = RunConfig::parse("model = toy\nencoder = conformer\nmax_steps = 50\nlr = 1e-3\nmask_position = pre\n");
  const auto p = pretrain_config(c);
  EXPECT_EQ(p.model.encoder.dim, 64u);
  EXPECT_EQ(p.model.encoder.kind, EncoderKind::Conformer);
  EXPECT_EQ(p.max_steps, 50);
  EXPECT_EQ(p.schedule.total_steps, 50);
  EXPECT_EQ(p.schedule.peak, 1e-3);
  const auto f = finetune_config(c);
  EXPECT_EQ(f.masking.position, MaskPosition::Pre);
  EXPECT_EQ(f.max_steps, 50);
}

TEST(RunConfig, InvalidCombinationsAreConfigErrors) {
  EXPECT_THROW(finetune_config(RunConfig::parse("frontend = wav\nmask_position = pre\n")), ConfigError);
  EXPECT_THROW(finetune_config(RunConfig::parse("max_steps = 10\neval_every = 20\n")), ConfigError);
  EXPECT_THROW(pretrain_config(RunConfig::parse("mask_prob = 1.5\n")), ConfigError);
}

}  // namespace
}  // namespace w2vj
