#include "evsal/esim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "evsal/error.hpp"

namespace evsal {

void SimConfig::validate() const {
  if (!(c_pos > 0) || !(c_neg > 0) || refractory_us < 0 || !(log_eps > 0)) {
    throw Error(ErrorKind::InvalidConfig,
                "contrast thresholds and log_eps must be positive, refractory non-negative");
  }
}

Image log_intensity(const Frame& frame, double log_eps) {
  Image out(frame.intensity.width, frame.intensity.height);
  for (std::size_t i = 0; i < frame.intensity.size(); ++i) {
    const double v = frame.intensity.values[i];
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::NonFiniteInput, "non-finite intensity", i);
    }
    out.values[i] = std::log(v + log_eps);
  }
  return out;
}

namespace {

struct PendingEvent {
  std::int64_t t;
  std::size_t pixel;
  std::int8_t p;
};

void check_frames(std::span<const Frame> frames) {
  if (frames.size() < 2) {
    throw Error(ErrorKind::TooFewFrames, "need at least two frames");
  }
  const std::size_t w = frames[0].intensity.width;
  const std::size_t h = frames[0].intensity.height;
  if (w < 1 || h < 1 || w > 65536 || h > 65536) {
    throw Error(ErrorKind::GeometryMismatch, "frame geometry must be within 1..65536");
  }
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Image& img = frames[k].intensity;
    if (img.width != w || img.height != h || img.values.size() != w * h) {
      throw Error(ErrorKind::GeometryMismatch, "frame " + std::to_string(k), k);
    }
    if (k > 0 && frames[k].timestamp <= frames[k - 1].timestamp) {
      throw Error(ErrorKind::NonIncreasingTimestamps, "frame " + std::to_string(k), k);
    }
    for (double v : img.values) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "frame " + std::to_string(k), k);
      if (v < 0.0 || v > 1.0) {
        throw Error(ErrorKind::IntensityOutOfRange, "frame " + std::to_string(k), k);
      }
    }
  }
}

}  // namespace

EventStream simulate(std::span<const Frame> frames, const SimConfig& cfg) {
  cfg.validate();
  check_frames(frames);

  const std::size_t width = frames[0].intensity.width;
  const std::size_t height = frames[0].intensity.height;
  const std::size_t pixels = width * height;

  std::vector<Image> logs;
  logs.reserve(frames.size());
  for (const Frame& f : frames) logs.push_back(log_intensity(f, cfg.log_eps));

  std::vector<PendingEvent> pending;
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    // The reference level is base + ups * c_pos - downs * c_neg; keeping the
    // crossing counts as integers means a monotone ramp crosses exactly
    // floor(dL / c) levels however many frames it spans.
    const double base = logs[0].values[pix];
    double ups = 0.0, downs = 0.0;
    std::optional<std::int64_t> last_emitted;

    auto crossing = [&](double t_exact, std::int8_t polarity) {
      const auto t = static_cast<std::int64_t>(std::trunc(t_exact));
      if (!last_emitted || t - *last_emitted >= cfg.refractory_us) {
        pending.push_back({t, pix, polarity});
        last_emitted = t;
      }
    };

    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
      const double la = logs[k].values[pix];
      const double lb = logs[k + 1].values[pix];
      const double delta = lb - la;
      if (delta == 0.0) continue;
      const auto ta = static_cast<double>(frames[k].timestamp);
      const auto tb = static_cast<double>(frames[k + 1].timestamp);
      const double dt = tb - ta;

      if (delta > 0) {
        // Offset of la above the level where the up-count started.
        const double r = la - base + downs * cfg.c_neg;
        const double target = std::floor((lb - base + downs * cfg.c_neg) / cfg.c_pos);
        for (double j = ups + 1; j <= target; ++j) {
          crossing(std::clamp(ta + (j * cfg.c_pos - r) / delta * dt, ta, tb), 1);
        }
        ups = std::max(ups, target);
      } else {
        const double r = base + ups * cfg.c_pos - la;
        const double target = std::floor((base + ups * cfg.c_pos - lb) / cfg.c_neg);
        for (double j = downs + 1; j <= target; ++j) {
          crossing(std::clamp(ta + (j * cfg.c_neg - r) / -delta * dt, ta, tb), -1);
        }
        downs = std::max(downs, target);
      }
    }
  }

  // Pixels were visited in row-major order, so a stable sort on time alone
  // breaks ties by (y, x) and keeps per-pixel emission order.
  std::stable_sort(pending.begin(), pending.end(),
                   [](const PendingEvent& a, const PendingEvent& b) { return a.t < b.t; });

  EventStream out;
  out.geometry = {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)};
  out.events.reserve(pending.size());
  for (const PendingEvent& e : pending) {
    out.events.push_back({static_cast<std::uint16_t>(e.pixel % width),
                          static_cast<std::uint16_t>(e.pixel / width), e.t, e.p});
  }
  return out;
}

}  // namespace evsal
