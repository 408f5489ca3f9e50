#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"
#include "evsal/event_core.hpp"

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

EventStream random_stream(std::mt19937_64& rng, std::size_t n, SensorGeometry g,
                          std::int64_t t_max) {
  EventStream s{g, {}};
  std::uniform_int_distribution<std::uint32_t> ux(0, g.width - 1), uy(0, g.height - 1);
  std::uniform_int_distribution<std::int64_t> ut(0, t_max);
  std::bernoulli_distribution up(0.5);
  std::vector<std::int64_t> ts(n);
  for (auto& t : ts) t = ut(rng);
  std::sort(ts.begin(), ts.end());
  for (std::size_t i = 0; i < n; ++i) {
    s.events.push_back({static_cast<std::uint16_t>(ux(rng)), static_cast<std::uint16_t>(uy(rng)),
                        ts[i], static_cast<std::int8_t>(up(rng) ? 1 : -1)});
  }
  return s;
}

}  // namespace

TEST(ValidateStream, EmptyIsValid) { EXPECT_NO_THROW(validate_stream({{4, 3}, {}})); }

TEST(ValidateStream, EqualTimestampsAllowed) {
  EventStream s{{4, 3}, {{0, 0, 10, 1}, {1, 1, 10, -1}, {2, 2, 20, 1}}};
  EXPECT_NO_THROW(validate_stream(s));
}

TEST(ValidateStream, ReportsOffendingIndex) {
  EventStream s{{4, 3}, {{0, 0, 10, 1}, {4, 0, 11, 1}}};
  try {
    validate_stream(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfBounds);
    EXPECT_EQ(e.index(), 1u);
  }
  EventStream back{{4, 3}, {{0, 0, 10, 1}, {0, 0, 20, 1}, {0, 0, 19, 1}}};
  try {
    validate_stream(back);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonMonotonicTimestamp);
    EXPECT_EQ(e.index(), 2u);
  }
  EventStream pol{{4, 3}, {{0, 0, 10, 0}}};
  EXPECT_EQ(kind_of([&] { validate_stream(pol); }), ErrorKind::BadPolarity);
}

TEST(Voxelize, EmptyStreamGivesZeros) {
  const VoxelGrid g = voxelize({{5, 4}, {}}, 3, 100, 0);
  EXPECT_EQ(g.bins(), 3u);
  EXPECT_EQ(g.counts().size(), 3u * 2 * 5 * 4);
  EXPECT_EQ(g.total(), 0u);
}

TEST(Voxelize, SingleEvent) {
  EventStream s{{8, 8}, {{3, 5, 50'000, 1}}};
  const VoxelGrid g = voxelize(s, 2, 100'000, 0);
  EXPECT_EQ(g.at(0, 0, 5, 3), 1u);
  EXPECT_EQ(g.total(), 1u);
}

TEST(Voxelize, HalfOpenEdgesAndDropping) {
  EventStream s{{2, 2}, {{0, 0, -1, 1}, {0, 0, 0, 1}, {0, 0, 99, -1}, {0, 0, 100, 1}, {1, 1, 200, 1}}};
  const VoxelGrid g = voxelize(s, 2, 100, 0);
  EXPECT_EQ(g.at(0, 0, 0, 0), 1u);
  EXPECT_EQ(g.at(0, 1, 0, 0), 1u);
  EXPECT_EQ(g.at(1, 0, 0, 0), 1u);
  EXPECT_EQ(g.total(), 3u);
}

TEST(Voxelize, NegativeOriginOffsets) {
  EventStream s{{1, 1}, {{0, 0, -150, 1}, {0, 0, -50, -1}}};
  const VoxelGrid g = voxelize(s, 2, 100, -200);
  EXPECT_EQ(g.at(0, 0, 0, 0), 1u);
  EXPECT_EQ(g.at(1, 1, 0, 0), 1u);
}

TEST(Voxelize, InvalidBinning) {
  EXPECT_EQ(kind_of([] { voxelize({{1, 1}, {}}, 0, 100, 0); }), ErrorKind::InvalidBinning);
  EXPECT_EQ(kind_of([] { voxelize({{1, 1}, {}}, 2, 0, 0); }), ErrorKind::InvalidBinning);
}

TEST(Voxelize, MatchesOneAtATimeOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const SensorGeometry geo{5, 3};
    const EventStream s = random_stream(rng, 7, geo, 399);
    const VoxelGrid g = voxelize(s, 4, 100, 0);
    std::vector<std::uint64_t> expected(4 * 2 * 15, 0);
    for (const Event& e : s.events) {
      const std::size_t bin = static_cast<std::size_t>(e.t / 100);
      const std::size_t ch = e.p > 0 ? 0 : 1;
      expected[((bin * 2 + ch) * 3 + e.y) * 5 + e.x] += 1;
    }
    EXPECT_EQ(g.counts(), expected);
  }
}

TEST(Voxelize, SliceThenBinEqualsBin) {
  std::mt19937_64 rng(5);
  const EventStream s = random_stream(rng, 300, {6, 4}, 1000);
  const VoxelGrid a = voxelize(s, 3, 200, 100);
  const VoxelGrid b = voxelize(slice_window(s, 100, 700), 3, 200, 100);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.channel_total(0) + a.channel_total(1), a.total());
}

TEST(SliceWindow, Examples) {
  std::mt19937_64 rng(9);
  const EventStream s = random_stream(rng, 200, {4, 4}, 300);
  EXPECT_EQ(slice_window(s, 0, 301), s);
  EXPECT_TRUE(slice_window(s, 150, 150).events.empty());
  const EventStream sub = slice_window(s, 100, 200);
  std::vector<Event> expected;
  for (const Event& e : s.events) {
    if (e.t >= 100 && e.t < 200) expected.push_back(e);
  }
  EXPECT_EQ(sub.events, expected);
  EXPECT_EQ(sub.geometry, s.geometry);
  EXPECT_EQ(kind_of([&] { slice_window(s, 5, 4); }), ErrorKind::InvalidWindow);
}

TEST(Evs1, RoundTripThroughFile) {
  const EventStream s{{640, 480}, {{1, 2, 3, 1}, {639, 479, 3, -1}, {0, 0, 1'000'000'000'000, 1}}};
  const auto path = std::filesystem::temp_directory_path() / "evsal_roundtrip.evs";
  write_events(s, path);
  EXPECT_EQ(read_events(path), s);
  std::filesystem::remove(path);
}

TEST(Evs1, LayoutIsSixteenBytesPerRecord) {
  const EventStream s{{3, 2}, {{2, 1, 7, -1}}};
  const auto bytes = encode_events(s);
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EVS1");
  EXPECT_EQ(bytes[20], 2);                              // x
  EXPECT_EQ(bytes[22], 1);                              // y
  EXPECT_EQ(static_cast<std::int8_t>(bytes[24]), -1);  // p
  EXPECT_EQ(bytes[28], 7);                              // t
}

TEST(Evs1, Errors) {
  auto bytes = encode_events({{3, 2}, {{0, 0, 1, 1}, {1, 1, 2, 1}, {2, 1, 3, -1}, {0, 1, 4, 1}}});
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_events(bad); }), ErrorKind::BadMagic);

  auto short_by_one = bytes;
  short_by_one[12] = 5;  // header says 5, file holds 4
  EXPECT_EQ(kind_of([&] { decode_events(short_by_one); }), ErrorKind::TruncatedFile);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(kind_of([&] { decode_events(trailing); }), ErrorKind::TrailingData);

  auto out_of_bounds = bytes;
  out_of_bounds[20] = 9;
  EXPECT_EQ(kind_of([&] { decode_events(out_of_bounds); }), ErrorKind::InvariantViolation);

  auto pad = bytes;
  pad[25] = 1;
  EXPECT_EQ(kind_of([&] { decode_events(pad); }), ErrorKind::InvariantViolation);

  EXPECT_EQ(kind_of([] { decode_events({'E', 'V'}); }), ErrorKind::BadMagic);
}

TEST(Evs1, RandomRoundTripsAreBitExact) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 200; ++i) {
    const EventStream s = random_stream(rng, rng() % 50, {static_cast<std::uint32_t>(1 + rng() % 500),
                                                          static_cast<std::uint32_t>(1 + rng() % 500)},
                                        1'000'000);
    const auto bytes = encode_events(s);
    EXPECT_EQ(decode_events(bytes), s);
    EXPECT_EQ(encode_events(decode_events(bytes)), bytes);
  }
}
