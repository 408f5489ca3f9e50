#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "evsal/config.hpp"
#include "evsal/error.hpp"

using namespace evsal;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Usage;
}

}  // namespace

TEST(Constants, ShippedDefaults) {
  const Settings s;
  EXPECT_EQ(s.sim.c_pos, 0.09);
  EXPECT_EQ(s.sim.c_neg, 0.09);
  EXPECT_EQ(s.sim.refractory_us, 3000);
  EXPECT_EQ(s.loss.alpha1, 0.5);
  EXPECT_EQ(s.loss.alpha2, 0.7);
  EXPECT_EQ(s.train.lr, 0.006);
  EXPECT_EQ(s.train.max_epochs, 30u);
  EXPECT_EQ(s.train.early_stop_patience, 3u);
  EXPECT_EQ(s.train.plateau_patience, 1u);
  EXPECT_EQ(s.train.plateau_factor, 0.1);
  EXPECT_EQ(kBinMenu, (std::array<std::size_t, 4>{7, 10, 14, 21}));
  EXPECT_EQ(kNucfBinMs, 100.0);
  EXPECT_NEAR(kDhf1kBinMs, 33.33, 0.01);
  EXPECT_EQ(s.bin_ms, kNucfBinMs);
  EXPECT_EQ(s.voxel().bin_duration_us, 100'000);
  EXPECT_NO_THROW(s.validate());
}

TEST(Config, ParsesKeysAndComments) {
  Settings s;
  apply_config_text(s, "# header\ntrain.lr = 0.01  # trailing\n\nmodel.stage2.heads=4\nseed = 9\n"
                       "model.decoder = conv2d\nmodel.center_bias = false\nvoxel.bin_ms = 33.3\n");
  EXPECT_EQ(s.train.lr, 0.01);
  EXPECT_EQ(s.model.stages[1].heads, 4u);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.train.seed, 9u);
  EXPECT_EQ(s.model.decoder, DecoderKind::Conv2d);
  EXPECT_FALSE(s.model.center_bias);
  EXPECT_EQ(s.voxel().bin_duration_us, 33'300);
}

TEST(Config, TextRoundTrip) {
  Settings s;
  apply_config_text(s, "sim.c_pos = 0.123456789012345\nmodel.blur_sigma = 1.5\ntrain.epochs = 4\n");
  Settings back;
  apply_config_text(back, to_config_text(s));
  EXPECT_EQ(to_config_text(back), to_config_text(s));
  EXPECT_EQ(back.sim.c_pos, 0.123456789012345);
  const auto keys = config_keys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "model.stage4.channels"), keys.end());
}

TEST(Config, Errors) {
  Settings s;
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "train.nope = 1\n"); }), ErrorKind::UnknownKey);
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "train.lr = fast\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "train.epochs = -3\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "train.epochs = 2.5\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "model.center_bias = maybe\n"); }), ErrorKind::InvalidConfig);
  EXPECT_EQ(kind_of([&] { apply_config_text(s, "just words\n"); }), ErrorKind::InvalidConfig);
  try {
    apply_config_text(s, "a = 1\n", "my.cfg");
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).find("UnknownKey: my.cfg:1"), 0u) << e.what();
  }
  EXPECT_EQ(kind_of([&] { apply_config_file(s, "/nonexistent/evsal.cfg"); }), ErrorKind::Io);

  Settings bad;
  bad.model.stages[0].window = 5;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::WindowMismatch);
}

TEST(Config, FileApplies) {
  const auto path = std::filesystem::temp_directory_path() / "evsal_config_test.cfg";
  {
    std::ofstream f(path);
    f << "loss.alpha2 = 0.25\n";
  }
  Settings s;
  apply_config_file(s, path);
  EXPECT_EQ(s.loss.alpha2, 0.25);
  std::filesystem::remove(path);
}
