#include <gtest/gtest.h>

#include "mrrn/run_config.hpp"

using namespace mrrn;

TEST(KeyValueConfig, ParsesSectionsCommentsAndWhitespace) {
  auto kv = KeyValueConfig::parse_text(
      "# top comment\n"
      "loose=1\n"
      "[run]\n"
      "  seed = 7   # trailing comment\n"
      "precision=f64\n"
      "\n"
      "[train]\n"
      "lr=0.003\n");
  EXPECT_TRUE(kv.has("loose"));
  EXPECT_EQ(kv.get("run.seed", ""), "7");
  EXPECT_EQ(kv.get("run.precision", ""), "f64");
  EXPECT_DOUBLE_EQ(kv.get_double("train.lr", 0), 0.003);
  EXPECT_EQ(kv.get("missing.key", "fallback"), "fallback");
  EXPECT_EQ(kv.get_long("missing.key", 42), 42);
}

TEST(KeyValueConfig, MalformedLinesThrow) {
  EXPECT_THROW(KeyValueConfig::parse_text("[run\nseed=1\n"), std::runtime_error);
  EXPECT_THROW(KeyValueConfig::parse_text("just a bare line\n"), std::runtime_error);
  EXPECT_THROW(KeyValueConfig::parse_file("/nonexistent/path.cfg"), std::runtime_error);
}

TEST(KeyValueConfig, SerializeIsCanonicalAndRoundTrips) {
  auto kv = KeyValueConfig::parse_text("[b]\nz=1\n[a]\ny=2\n");
  EXPECT_EQ(kv.serialize(), "a.y=2\nb.z=1\n");
  kv.set("a.y", "3");
  EXPECT_EQ(kv.get("a.y", ""), "3");
}

TEST(RunConfig, DefaultsApplyWhenUnset) {
  auto rc = RunConfig::from_config(KeyValueConfig::parse_text(""));
  EXPECT_EQ(rc.precision, "f32");
  EXPECT_EQ(rc.model_kind, "mrrn");
  EXPECT_DOUBLE_EQ(rc.train.lr, 1e-4);
  EXPECT_EQ(rc.train.epochs, 50);
  EXPECT_EQ(rc.train.batch_size, 10);
  EXPECT_EQ(rc.arch.num_streams, 4);
  EXPECT_EQ(rc.arch.input_size, 256);
  EXPECT_EQ(rc.phantom.size, 256);
}

TEST(RunConfig, OverridesAndChannelDerivation) {
  auto rc = RunConfig::from_config(KeyValueConfig::parse_text(
      "[run]\nseed=9\nprecision=f64\nmodel=unet\n"
      "[arch]\nnum_streams=3\nbase_channels=8\ninput_size=64\n"
      "[train]\nlr=0.01\nepochs=3\nbatch_size=4\n"
      "[data]\nsize=64\nnoise_sigma=0.05\n"));
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.precision, "f64");
  EXPECT_EQ(rc.model_kind, "unet");
  ASSERT_EQ(rc.arch.channels.size(), 3u);
  EXPECT_EQ(rc.arch.channels[0], 8);
  EXPECT_EQ(rc.arch.channels[2], 32);
  EXPECT_DOUBLE_EQ(rc.train.lr, 0.01);
  EXPECT_EQ(rc.train.seed, 9u);
  EXPECT_EQ(rc.phantom.size, 64);
  EXPECT_DOUBLE_EQ(rc.phantom.noise_sigma, 0.05);
}

TEST(RunConfig, ExplicitChannelsWin) {
  auto rc = RunConfig::from_config(KeyValueConfig::parse_text(
      "[arch]\nnum_streams=2\nchannels=5,9\ninput_size=32\n"));
  ASSERT_EQ(rc.arch.channels.size(), 2u);
  EXPECT_EQ(rc.arch.channels[0], 5);
  EXPECT_EQ(rc.arch.channels[1], 9);
}

TEST(RunConfig, InvalidValuesThrow) {
  EXPECT_THROW(RunConfig::from_config(KeyValueConfig::parse_text("[run]\nprecision=f16\n")),
               std::runtime_error);
  EXPECT_THROW(RunConfig::from_config(KeyValueConfig::parse_text("[run]\nmodel=vgg\n")),
               std::runtime_error);
  EXPECT_THROW(RunConfig::from_config(KeyValueConfig::parse_text("[train]\nepochs=0\n")),
               std::invalid_argument);
  EXPECT_THROW(RunConfig::from_config(KeyValueConfig::parse_text("[arch]\nnum_streams=1\n")),
               std::invalid_argument);
}

TEST(RunConfig, ResolvedTextReparsesToSameConfig) {
  auto rc = RunConfig::from_config(KeyValueConfig::parse_text(
      "[run]\nseed=3\n[arch]\nnum_streams=2\nchannels=4,8\ninput_size=64\n"
      "[train]\nlr=0.003\nepochs=2\n"));
  auto rc2 = RunConfig::from_config(KeyValueConfig::parse_text(rc.resolved_text()));
  EXPECT_EQ(rc2.seed, rc.seed);
  EXPECT_EQ(rc2.arch.canonical_text(), rc.arch.canonical_text());
  EXPECT_DOUBLE_EQ(rc2.train.lr, rc.train.lr);
  EXPECT_EQ(rc2.train.epochs, rc.train.epochs);
  EXPECT_EQ(rc2.resolved_text(), rc.resolved_text());
}
