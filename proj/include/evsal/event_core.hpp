#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace evsal {

struct SensorGeometry {
  std::uint32_t width = 1;
  std::uint32_t height = 1;

  std::size_t pixels() const { return std::size_t{width} * height; }
  bool contains(std::int64_t x, std::int64_t y) const {
    return x >= 0 && y >= 0 && x < std::int64_t{width} && y < std::int64_t{height};
  }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

/// One asynchronous brightness-change record. Timestamps are microseconds.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int64_t t = 0;
  std::int8_t p = 1;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  SensorGeometry geometry;
  std::vector<Event> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Per-bin, per-polarity event counts laid out as [bin][channel][y][x].
/// Channel 0 holds p = +1 events, channel 1 holds p = -1.
class VoxelGrid {
 public:
  VoxelGrid(SensorGeometry geometry, std::size_t bins, std::int64_t bin_duration,
            std::int64_t origin);

  const SensorGeometry& geometry() const { return geometry_; }
  std::size_t bins() const { return bins_; }
  std::int64_t bin_duration() const { return bin_duration_; }
  std::int64_t origin() const { return origin_; }

  std::uint64_t at(std::size_t bin, std::size_t channel, std::size_t y,
                   std::size_t x) const {
    return counts_[offset(bin, channel, y, x)];
  }
  std::uint64_t& at(std::size_t bin, std::size_t channel, std::size_t y,
                    std::size_t x) {
    return counts_[offset(bin, channel, y, x)];
  }

  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t total() const;
  std::uint64_t channel_total(std::size_t channel) const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  std::size_t offset(std::size_t bin, std::size_t channel, std::size_t y,
                     std::size_t x) const {
    return ((bin * 2 + channel) * geometry_.height + y) * geometry_.width + x;
  }

  SensorGeometry geometry_;
  std::size_t bins_;
  std::int64_t bin_duration_;
  std::int64_t origin_;
  std::vector<std::uint64_t> counts_;
};

/// Throws OutOfBounds, NonMonotonicTimestamp or BadPolarity with the index of
/// the first offending event.
void validate_stream(const EventStream& stream);

/// Bins events into half-open intervals [origin + k*bin_duration,
/// origin + (k+1)*bin_duration). Events outside the window are dropped.
VoxelGrid voxelize(const EventStream& stream, std::size_t bins,
                   std::int64_t bin_duration, std::int64_t origin);

/// Events with t_start <= t < t_end, order preserved.
EventStream slice_window(const EventStream& stream, std::int64_t t_start,
                         std::int64_t t_end);

// EVS1 container: "EVS1", u32 width, u32 height, u64 count, then 16-byte
// records {u16 x, u16 y, i8 p, 3 zero bytes, i64 t}, all little-endian.
std::vector<std::uint8_t> encode_events(const EventStream& stream);
EventStream decode_events(const std::vector<std::uint8_t>& bytes);

EventStream read_events(const std::filesystem::path& path);
void write_events(const EventStream& stream, const std::filesystem::path& path);

}  // namespace evsal
