#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "evsal/checkpoint.hpp"
#include "evsal/event_core.hpp"
#include "evsal/ops.hpp"
#include "evsal/tape.hpp"

namespace evsal {

struct StageConfig {
  std::size_t depth = 1;
  std::size_t channels = 16;
  // Spatial reduction entering the stage: the patch size for the first
  // stage, 2 (patch merging) for the others.
  std::size_t downsample = 2;
  std::size_t window = 4;
  std::size_t heads = 1;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

enum class DecoderKind { Conv3d, Conv2d };

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t bins = 2;
  std::size_t fusion_depth = 32;
  std::array<StageConfig, 4> stages{{
      {1, 16, 4, 4, 1},
      {1, 32, 2, 4, 2},
      {1, 64, 2, 4, 4},
      {1, 128, 2, 4, 4},
  }};
  std::size_t mlp_ratio = 4;
  double leaky_slope = 0.01;
  double blur_sigma = 2.0;
  std::size_t blur_radius = 4;
  bool center_bias = true;
  DecoderKind decoder = DecoderKind::Conv3d;
  // Temporal extent of the decoder's 3D kernels (odd).
  std::size_t decoder_kt = 3;

  /// Throws InvalidConfig or WindowMismatch.
  void validate() const;
  std::size_t total_downsample() const;
  /// Side lengths (h, w) of stage i's token grid.
  std::pair<std::size_t, std::size_t> stage_grid(std::size_t i) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// ln(1 + count) voxel grids stacked as [B, T, 2, H, W].
Tensor voxel_input(const std::vector<VoxelGrid>& batch);

/// Four-stage windowed-attention encoder, multi-scale 3D fusion decoder,
/// learned center bias, and blur + sigmoid head.
class SestModel {
 public:
  explicit SestModel(ModelConfig cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters();
  Parameter* find(const std::string& name);
  Parameter* center_bias();

  ops::BatchNormState& bn_state() { return bn_; }
  const ops::BatchNormState& bn_state() const { return bn_; }

  // Stage-by-stage pipeline. Public tensors use the [B, T, C, H, W] layout.
  Var flatten_time(const Var& x) const;
  Var unflatten_time(const Var& x, std::size_t batch) const;
  std::array<Var, 4> encode(Tape& tape, const Var& flat, std::size_t batch);
  Var fuse(Tape& tape, const std::array<Var, 4>& features);
  Var refine(Tape& tape, const Var& u, ops::NormMode mode);
  Var reconstruct(Tape& tape, const Var& z);
  Var apply_center_bias(Tape& tape, const Var& y);
  /// x: [B, T, 2, H, W] (already log-scaled). Returns maps in (0, 1).
  Var forward(Tape& tape, const Var& x, ops::NormMode mode);

  /// Inference without gradients, batch-norm in eval mode.
  Tensor predict(const Tensor& x);

  /// Parameter values, AdamW state, and batch-norm running statistics.
  std::vector<CheckpointRecord> records() const;
  void load(const std::vector<CheckpointRecord>& records);

 private:
  struct Linear {
    std::size_t weight, bias;
    bool has_bias;
  };
  struct Norm {
    std::size_t gamma, beta;
  };
  struct Block {
    Norm norm1;
    Linear q, k, v, proj;
    Norm norm2;
    Linear fc1, fc2;
  };
  struct Stage {
    Norm merge_norm;
    Linear merge;
    std::vector<Block> blocks;
    Norm out_norm;
  };
  struct Conv {
    std::size_t weight, bias;
    bool has_bias;
  };

  std::size_t add_param(const std::string& name, Tensor value);
  std::size_t add_uniform(const std::string& name, Shape shape, double bound);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, bool bias);
  Norm make_norm(const std::string& name, std::size_t channels);
  Conv make_decoder_conv(const std::string& name, std::size_t in, std::size_t out,
                         bool bias = true);

  Var bind(Tape& tape, std::size_t index);
  Var linear(Tape& tape, const Var& x, const Linear& l);
  Var norm(Tape& tape, const Var& x, const Norm& n);
  Var attention(Tape& tape, const Var& tokens, const Block& b, std::size_t window,
                std::size_t heads);
  Var block(Tape& tape, const Var& tokens, const Block& b, std::size_t window,
            std::size_t heads);
  Var merge(Tape& tape, const Var& tokens, const Stage& s);
  Var decoder_conv(Tape& tape, const Var& x, const Conv& c);

  ModelConfig cfg_;
  std::deque<Parameter> params_;
  Conv patch_embed_{};
  Norm patch_norm_{};
  std::array<Stage, 4> stages_;
  std::array<Conv, 4> fuse_{};
  Conv refine_conv_{};
  Norm refine_bn_{};
  Conv output_conv_{};
  std::size_t center_bias_ = 0;
  bool has_center_bias_ = false;
  ops::BatchNormState bn_;
  std::mt19937_64 rng_;
};

}  // namespace evsal
