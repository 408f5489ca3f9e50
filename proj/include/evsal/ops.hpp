#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "evsal/tape.hpp"
#include "evsal/tensor.hpp"

// Differentiable operations. Each records its output on the tape of its
// inputs; all inputs must share one tape.
namespace evsal::ops {

// Elementwise and reductions.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sum(const Var& a);
Var mean(const Var& a);

// Layout.
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& parts, std::size_t axis);

/// [..., m, k] x [..., k, n] with equal batch dims, or [..., m, k] x [k, n].
Var matmul(const Var& a, const Var& b);
Var transpose_last2(const Var& a);
/// x[..., n] + bias[n]
Var add_bias(const Var& x, const Var& bias);

Var softmax(const Var& x, std::size_t axis);
/// Normalizes over the last axis (population variance), then gamma * x + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

struct Conv3dOptions {
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> pad{0, 0, 0};
};
struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> pad{0, 0};
};

/// x[N,Cin,T,H,W] (*) w[Cout,Cin,kt,kh,kw] + b[Cout]; b may be an empty Var.
/// Each output accumulates bias first, then input channels, then kernel taps
/// in row-major (t, h, w) order.
Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dOptions& opt = {});
/// x[N,Cin,H,W] (*) w[Cout,Cin,kh,kw] + b[Cout]. Same accumulation order as
/// conv3d with a temporal kernel of one.
Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOptions& opt = {});

enum class NormMode { Train, Eval };

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Per-channel normalization of x[N,C,T,H,W]. Train mode uses batch
/// statistics (population variance) and updates the running averages; eval
/// mode uses the running averages.
Var batch_norm3d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 NormMode mode);

/// Spatial bilinear resize of x[N,C,T,H,W] with half-pixel source
/// coordinates (align_corners = false); the temporal axis is untouched.
Var upsample_trilinear(const Var& x, std::size_t out_h, std::size_t out_w);

Var leaky_relu(const Var& x, double slope = 0.01);
Var sigmoid(const Var& x);

/// Separable Gaussian smoothing over the last two axes with reflect padding.
/// Written as x + sum_k w_k (x_k - x) so constant maps are exact fixed points.
Var gaussian_blur2d(const Var& x, double sigma, std::size_t radius);

/// x * (1 + gain), gain broadcast over all leading axes of x.
Var spatial_gain(const Var& x, const Var& gain);

/// Normalized 1D Gaussian taps of length 2 * radius + 1.
std::vector<double> gaussian_kernel(double sigma, std::size_t radius);

double sigmoid_scalar(double x);

}  // namespace evsal::ops
