#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evsal/dataset.hpp"
#include "evsal/esim.hpp"
#include "evsal/gradcheck.hpp"
#include "evsal/losses.hpp"
#include "evsal/model.hpp"
#include "evsal/ops.hpp"
#include "evsal/training.hpp"

namespace evsal {

/// Temporal bin counts evaluated for both datasets.
inline constexpr std::array<std::size_t, 4> kBinMenu{7, 10, 14, 21};
/// Bin duration for the 10 Hz N-UCF Sports recordings.
inline constexpr double kNucfBinMs = 100.0;
/// Bin duration for the 30 Hz N-DHF1K recordings.
inline constexpr double kDhf1kBinMs = 100.0 / 3.0;

struct GradCheckConfig {
  // Step for central differences, initial step for Ridders.
  double h = 1e-4;
  Difference method = Difference::Ridders;
  double tolerance = 1e-4;
  std::size_t batch = 2;
  std::size_t bins = 2;
  // Coordinates drawn per parameter tensor.
  std::size_t samples = 3;
};

/// Everything a config file can set.
struct Settings {
  SimConfig sim;
  double bin_ms = kNucfBinMs;
  std::int64_t origin_us = 0;
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  GradCheckConfig gradcheck;
  std::uint64_t seed = 0;

  VoxelConfig voxel() const;
  /// Validates every section.
  void validate() const;
};

/// Flat "key = value" text with '#' comments. Keys not in the registry raise
/// UnknownKey; badly typed values raise InvalidConfig.
void apply_config_text(Settings& settings, const std::string& text, const std::string& origin = "config");
void apply_config_file(Settings& settings, const std::filesystem::path& path);
void set_config_value(Settings& settings, const std::string& key, const std::string& value);

/// All registered keys with their current values, one per line.
std::string to_config_text(const Settings& settings);
std::vector<std::string> config_keys();

}  // namespace evsal
