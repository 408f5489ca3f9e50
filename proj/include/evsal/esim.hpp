#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evsal/event_core.hpp"
#include "evsal/image.hpp"

namespace evsal {

/// Intensity frame with values in [0, 1]; timestamp in microseconds.
struct Frame {
  std::int64_t timestamp = 0;
  Image intensity;
};

/// Log-contrast event simulator settings. Defaults follow the N-DHF1K /
/// N-UCF Sports conversion: symmetric thresholds of 0.09 and a 3 ms
/// refractory period.
struct SimConfig {
  double c_pos = 0.09;
  double c_neg = 0.09;
  std::int64_t refractory_us = 3000;
  double log_eps = 1e-3;

  void validate() const;
};

/// ln(I + log_eps) per pixel.
Image log_intensity(const Frame& frame, double log_eps);

/// Per-pixel threshold-crossing simulation over linearly interpolated log
/// intensity. Every crossing moves the pixel's reference level, whether or not
/// the refractory period suppresses the event. Output is sorted by timestamp,
/// then row-major pixel order.
EventStream simulate(std::span<const Frame> frames, const SimConfig& cfg);

}  // namespace evsal
