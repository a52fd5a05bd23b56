#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tea/run_config.hpp"

using namespace tea;

TEST(Toml, TablesScalarsAndComments) {
  const auto j = nlohmann::json::parse(toml_to_json(R"(
# leading comment
top = 1
[model]
d = 32          # trailing comment
name = "a # not a comment"
[model.spatial]
scale = 1.5e2
enabled = false
big = 1_000
)"));
  EXPECT_EQ(j.at("top"), 1);
  EXPECT_EQ(j.at("model").at("d"), 32);
  EXPECT_EQ(j.at("model").at("name"), "a # not a comment");
  EXPECT_DOUBLE_EQ(j.at("model").at("spatial").at("scale").get<double>(), 150.0);
  EXPECT_EQ(j.at("model").at("spatial").at("enabled"), false);
  EXPECT_EQ(j.at("model").at("spatial").at("big"), 1000);
}

TEST(Toml, Errors) {
  EXPECT_THROW(toml_to_json("[model\nd = 1"), ConfigError);
  EXPECT_THROW(toml_to_json("d 1"), ConfigError);
  EXPECT_THROW(toml_to_json("d = 1\nd = 2"), ConfigError);
  EXPECT_THROW(toml_to_json("d = [1, 2]"), ConfigError);
  try {
    toml_to_json("a = 1\nb = 2\nc = what");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(RunConfigTest, OverlaysApplyInOrder) {
  RunConfig c;
  c.apply_toml("[model]\nd = 32\n[train]\noptimizer = \"adam\"\nlearning_rate = 0.01\n");
  EXPECT_EQ(c.model.d, 32);
  EXPECT_EQ(c.train.optimizer.kind, OptimizerKind::Adam);
  c.apply_assignment("train.learning_rate=0.5");
  c.apply_assignment("train.optimizer=momentum");
  c.apply_assignment("synth.task=tracking");
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 0.5);
  EXPECT_EQ(c.train.optimizer.kind, OptimizerKind::Momentum);
  EXPECT_EQ(c.synth.task, SynthTask::Tracking);
  EXPECT_EQ(c.model.d, 32);  // untouched keys survive
}

TEST(RunConfigTest, JsonRoundTrip) {
  RunConfig c;
  c.apply_assignment("model.ff_width=48");
  c.apply_assignment("model.seed=17");
  c.apply_assignment("paths.data=\"x.json\"");
  RunConfig d;
  d.apply_json(c.to_json());
  EXPECT_EQ(d.to_json(), c.to_json());
  EXPECT_EQ(d.model_seed, 17u);
  EXPECT_EQ(d.paths.data, "x.json");
}

TEST(RunConfigTest, UnknownKeysAndBadTypes) {
  RunConfig c;
  EXPECT_THROW(c.apply_assignment("model.depth=3"), ConfigError);
  EXPECT_THROW(c.apply_assignment("nope=3"), ConfigError);
  EXPECT_THROW(c.apply_assignment("model.d=abc"), ConfigError);
  EXPECT_THROW(c.apply_assignment("model.d=1.5"), ConfigError);
  EXPECT_THROW(c.apply_assignment("train.optimizer=rmsprop"), ConfigError);
  EXPECT_THROW(c.apply_assignment("train.batch_size=0"), ConfigError);
  EXPECT_THROW(c.apply_assignment("model.clues.fine_grained_source=pixels"), ConfigError);
  EXPECT_THROW(c.apply_assignment("no equals sign"), ConfigError);
  EXPECT_THROW(c.apply_json("{\"model\": 3}"), ConfigError);
  EXPECT_THROW(c.apply_json("{not json"), ConfigError);
  // a failed overlay leaves the config unchanged
  EXPECT_EQ(c.to_json(), RunConfig{}.to_json());
}

TEST(RunConfigTest, Files) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto toml = (dir / "tea_cfg_test.toml").string();
  const auto js = (dir / "tea_cfg_test.json").string();
  std::ofstream(toml) << "[train]\nepochs = 3\n";
  std::ofstream(js) << R"({"train": {"epochs": 4}})";
  RunConfig c;
  c.apply_file(toml);
  EXPECT_EQ(c.train.epochs, 3);
  c.apply_file(js);
  EXPECT_EQ(c.train.epochs, 4);
  EXPECT_THROW(c.apply_file((dir / "tea_missing.toml").string()), ConfigError);
  std::filesystem::remove(toml);
  std::filesystem::remove(js);
}
