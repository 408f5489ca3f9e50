#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evsal/esim.hpp"
#include "evsal/event_core.hpp"
#include "evsal/metrics.hpp"
#include "evsal/tensor.hpp"

namespace evsal {

/// One clip: its voxel grid and, per bin, a ground-truth map and fixations.
struct Sample {
  VoxelGrid voxels;
  std::vector<SaliencyMap> gt;
  std::vector<FixationSet> fixations;

  /// Throws ShapeMismatch unless every map and fixation set matches the
  /// grid's geometry and bin count.
  void validate() const;
};

using Dataset = std::vector<Sample>;

struct VoxelConfig {
  std::size_t bins = 2;
  std::int64_t bin_duration_us = 100'000;
  std::int64_t origin_us = 0;
};

/// Model input [B, T, 2, H, W] for the given samples.
Tensor batch_input(const Dataset& data, const std::vector<std::size_t>& indices);
/// Ground truth [B, T, 1, H, W] for the given samples.
Tensor batch_target(const Dataset& data, const std::vector<std::size_t>& indices);

struct SynthConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t bins = 2;
  std::int64_t bin_duration_us = 100'000;
  std::size_t frames_per_bin = 4;
  double background = 0.2;
  double blob_peak = 0.7;
  double blob_sigma = 6.0;
  double gt_sigma = 5.0;
  double fixation_threshold = 0.6;
  SimConfig sim;
};

/// Frames of a bright Gaussian blob drifting across a dim background; the
/// blob centre at time t is also returned so ground truth can follow it.
struct SynthClip {
  std::vector<Frame> frames;
  std::vector<std::pair<double, double>> centres;  // per bin midpoint, (x, y)
};

SynthClip synth_clip(const SynthConfig& cfg, std::uint64_t seed);

/// Simulated events, voxel grid, Gaussian ground truth centred on the blob
/// at each bin midpoint (peak 1), and fixations where that map reaches the
/// threshold.
Sample synth_sample(const SynthConfig& cfg, std::uint64_t seed);
Dataset synth_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t seed);

/// Fixation CSV: optional "bin,x,y" header, then rows bin,x,y. A bin of -1
/// marks a fixation shared by every bin.
std::vector<FixationSet> read_fixations(const std::filesystem::path& path,
                                        SensorGeometry geometry, std::size_t bins);
void write_fixations(const std::vector<FixationSet>& sets, const std::filesystem::path& path);

/// Expands "{bin}" and "{bin:N}" (zero padded to N digits) in a path pattern.
std::string expand_bin_pattern(const std::string& pattern, std::size_t bin);

/// Manifest lines: "<events.evs> <gt pattern> <fixations.csv>", whitespace
/// separated, '#' comments, paths relative to the manifest's directory.
Dataset load_manifest(const std::filesystem::path& path, const VoxelConfig& voxel);

}  // namespace evsal
