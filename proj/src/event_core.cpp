#include "evsal/event_core.hpp"

#include <numeric>
#include <string>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"

namespace evsal {

namespace {

constexpr char kEventMagic[] = "EVS1";
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8;
constexpr std::size_t kRecordBytes = 16;

// Floor division; bin index of a timestamp relative to origin.
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

VoxelGrid::VoxelGrid(SensorGeometry geometry, std::size_t bins,
                     std::int64_t bin_duration, std::int64_t origin)
    : geometry_(geometry),
      bins_(bins),
      bin_duration_(bin_duration),
      origin_(origin),
      counts_(bins * 2 * geometry.pixels(), 0) {}

std::uint64_t VoxelGrid::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t VoxelGrid::channel_total(std::size_t channel) const {
  std::uint64_t sum = 0;
  const std::size_t plane = geometry_.pixels();
  for (std::size_t b = 0; b < bins_; ++b) {
    const std::size_t base = (b * 2 + channel) * plane;
    for (std::size_t i = 0; i < plane; ++i) sum += counts_[base + i];
  }
  return sum;
}

void validate_stream(const EventStream& stream) {
  const auto& g = stream.geometry;
  if (g.width < 1 || g.height < 1) {
    throw Error(ErrorKind::InvariantViolation, "sensor geometry must be at least 1x1");
  }
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    if (!g.contains(e.x, e.y)) {
      throw Error(ErrorKind::OutOfBounds,
                  "event " + std::to_string(i) + " at (" + std::to_string(e.x) + ", " +
                      std::to_string(e.y) + ") outside sensor",
                  i);
    }
    if (e.p != 1 && e.p != -1) {
      throw Error(ErrorKind::BadPolarity,
                  "event " + std::to_string(i) + " has polarity " + std::to_string(e.p), i);
    }
    if (i > 0 && e.t < stream.events[i - 1].t) {
      throw Error(ErrorKind::NonMonotonicTimestamp,
                  "event " + std::to_string(i) + " goes back in time", i);
    }
  }
}

VoxelGrid voxelize(const EventStream& stream, std::size_t bins,
                   std::int64_t bin_duration, std::int64_t origin) {
  if (bins == 0 || bin_duration <= 0) {
    throw Error(ErrorKind::InvalidBinning, "bins and bin_duration must be positive");
  }
  validate_stream(stream);
  VoxelGrid grid(stream.geometry, bins, bin_duration, origin);
  for (const Event& e : stream.events) {
    const std::int64_t k = floor_div(e.t - origin, bin_duration);
    if (k < 0 || k >= static_cast<std::int64_t>(bins)) continue;
    const std::size_t channel = e.p > 0 ? 0 : 1;
    ++grid.at(static_cast<std::size_t>(k), channel, e.y, e.x);
  }
  return grid;
}

EventStream slice_window(const EventStream& stream, std::int64_t t_start,
                         std::int64_t t_end) {
  if (t_start > t_end) {
    throw Error(ErrorKind::InvalidWindow, "t_start is after t_end");
  }
  EventStream out{stream.geometry, {}};
  for (const Event& e : stream.events) {
    if (e.t >= t_start && e.t < t_end) out.events.push_back(e);
  }
  return out;
}

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  validate_stream(stream);
  if (stream.geometry.width > 65536 || stream.geometry.height > 65536) {
    throw Error(ErrorKind::InvariantViolation, "EVS1 coordinates are 16-bit");
  }
  ByteWriter w;
  w.put_bytes(kEventMagic);
  w.put<std::uint32_t>(stream.geometry.width);
  w.put<std::uint32_t>(stream.geometry.height);
  w.put<std::uint64_t>(stream.events.size());
  for (const Event& e : stream.events) {
    w.put<std::uint16_t>(e.x);
    w.put<std::uint16_t>(e.y);
    w.put<std::int8_t>(e.p);
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(0);
    w.put<std::int64_t>(e.t);
  }
  return w.take();
}

EventStream decode_events(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_bytes(4) != kEventMagic) {
    throw Error(ErrorKind::BadMagic, "not an EVS1 file");
  }
  EventStream stream;
  stream.geometry.width = r.get<std::uint32_t>();
  stream.geometry.height = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (count > (bytes.size() - kHeaderBytes) / kRecordBytes) {
    throw Error(ErrorKind::TruncatedFile,
                "header declares " + std::to_string(count) + " events but only " +
                    std::to_string((bytes.size() - kHeaderBytes) / kRecordBytes) +
                    " records are present");
  }
  stream.events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.p = r.get<std::int8_t>();
    for (int pad = 0; pad < 3; ++pad) {
      if (r.get<std::uint8_t>() != 0) {
        throw Error(ErrorKind::InvariantViolation, "non-zero padding in record", i);
      }
    }
    e.t = r.get<std::int64_t>();
    stream.events.push_back(e);
  }
  if (!r.done()) {
    throw Error(ErrorKind::TrailingData, std::to_string(r.remaining()) +
                                             " bytes after the last record");
  }
  try {
    validate_stream(stream);
  } catch (const Error& e) {
    throw Error(ErrorKind::InvariantViolation, e.what(), e.index());
  }
  return stream;
}

EventStream read_events(const std::filesystem::path& path) {
  return decode_events(read_file(path));
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
  write_file_atomic(path, encode_events(stream));
}

}  // namespace evsal
