#include "evsal/dataset.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"
#include "evsal/image.hpp"

namespace evsal {

void Sample::validate() const {
  const SensorGeometry& g = voxels.geometry();
  if (gt.size() != voxels.bins() || fixations.size() != voxels.bins()) {
    throw Error(ErrorKind::ShapeMismatch, "sample has " + std::to_string(voxels.bins()) +
                                              " bins but " + std::to_string(gt.size()) +
                                              " maps and " + std::to_string(fixations.size()) +
                                              " fixation sets");
  }
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (gt[t].width != g.width || gt[t].height != g.height) {
      throw Error(ErrorKind::ShapeMismatch, "ground-truth map size differs from sensor", t);
    }
    if (fixations[t].geometry() != g) {
      throw Error(ErrorKind::ShapeMismatch, "fixation geometry differs from sensor", t);
    }
  }
}

namespace {

const Sample& first_of(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty() || data.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
  return data.at(indices.front());
}

}  // namespace

Tensor batch_input(const Dataset& data, const std::vector<std::size_t>& indices) {
  const Sample& first = first_of(data, indices);
  const SensorGeometry g = first.voxels.geometry();
  const std::size_t per = first.voxels.counts().size();
  Tensor out({indices.size(), first.voxels.bins(), 2, g.height, g.width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const VoxelGrid& v = data.at(indices[b]).voxels;
    if (v.geometry() != g || v.bins() != first.voxels.bins()) {
      throw Error(ErrorKind::ShapeMismatch, "samples in a batch must share geometry and bins");
    }
    for (std::size_t i = 0; i < per; ++i) {
      out[b * per + i] = std::log1p(static_cast<double>(v.counts()[i]));
    }
  }
  return out;
}

Tensor batch_target(const Dataset& data, const std::vector<std::size_t>& indices) {
  const Sample& first = first_of(data, indices);
  const SensorGeometry g = first.voxels.geometry();
  const std::size_t bins = first.voxels.bins();
  const std::size_t plane = g.pixels();
  Tensor out({indices.size(), bins, 1, g.height, g.width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = data.at(indices[b]);
    s.validate();
    if (s.voxels.geometry() != g || s.voxels.bins() != bins) {
      throw Error(ErrorKind::ShapeMismatch, "samples in a batch must share geometry and bins");
    }
    for (std::size_t t = 0; t < bins; ++t) {
      std::copy(s.gt[t].values.begin(), s.gt[t].values.end(),
                out.ptr() + (b * bins + t) * plane);
    }
  }
  return out;
}

SynthClip synth_clip(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.width == 0 || cfg.height == 0 || cfg.bins == 0 || cfg.frames_per_bin == 0 ||
      cfg.bin_duration_us <= 0) {
    throw Error(ErrorKind::InvalidConfig, "synthetic clip needs positive size, bins and timing");
  }
  std::mt19937_64 rng(seed);
  const double w = static_cast<double>(cfg.width);
  const double h = static_cast<double>(cfg.height);
  std::uniform_real_distribution<double> ux(0.25 * w, 0.75 * w);
  std::uniform_real_distribution<double> uy(0.25 * h, 0.75 * h);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  const double x0 = ux(rng), y0 = uy(rng), a = angle(rng);
  const double duration = static_cast<double>(cfg.bin_duration_us * static_cast<std::int64_t>(cfg.bins));
  // Travel about a fifth of the frame over the clip.
  const double speed = 0.2 * std::min(w, h) / duration;
  auto centre = [&](double t) {
    return std::pair{x0 + speed * std::cos(a) * t, y0 + speed * std::sin(a) * t};
  };

  SynthClip clip;
  const std::size_t frames = cfg.bins * cfg.frames_per_bin + 1;
  const double step = static_cast<double>(cfg.bin_duration_us) / static_cast<double>(cfg.frames_per_bin);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto t = static_cast<std::int64_t>(std::llround(step * static_cast<double>(f)));
    const auto [cx, cy] = centre(static_cast<double>(t));
    Image img(cfg.width, cfg.height);
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        img(y, x) = cfg.background +
                    cfg.blob_peak * std::exp(-(dx * dx + dy * dy) / (2 * cfg.blob_sigma * cfg.blob_sigma));
      }
    }
    clip.frames.push_back({t, std::move(img)});
  }
  for (std::size_t b = 0; b < cfg.bins; ++b) {
    clip.centres.push_back(centre((static_cast<double>(b) + 0.5) * static_cast<double>(cfg.bin_duration_us)));
  }
  return clip;
}

Sample synth_sample(const SynthConfig& cfg, std::uint64_t seed) {
  const SynthClip clip = synth_clip(cfg, seed);
  const EventStream events = simulate(clip.frames, cfg.sim);
  Sample s{voxelize(events, cfg.bins, cfg.bin_duration_us, 0), {}, {}};
  const SensorGeometry g = s.voxels.geometry();
  for (const auto& [cx, cy] : clip.centres) {
    Image map(cfg.width, cfg.height);
    std::vector<std::pair<std::size_t, std::size_t>> fix;
    for (std::size_t y = 0; y < cfg.height; ++y) {
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        map(y, x) = std::exp(-(dx * dx + dy * dy) / (2 * cfg.gt_sigma * cfg.gt_sigma));
        if (map(y, x) >= cfg.fixation_threshold) fix.emplace_back(x, y);
      }
    }
    s.gt.push_back(std::move(map));
    s.fixations.emplace_back(g, std::move(fix));
  }
  return s;
}

Dataset synth_dataset(const SynthConfig& cfg, std::size_t count, std::uint64_t seed) {
  Dataset out;
  std::mt19937_64 seeds(seed);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(cfg, seeds()));
  return out;
}

std::vector<FixationSet> read_fixations(const std::filesystem::path& path,
                                        SensorGeometry geometry, std::size_t bins) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open fixations " + path.string());
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> points(bins);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.rfind("bin", 0) == 0) continue;
    std::istringstream row(line);
    long long bin = 0, x = 0, y = 0;
    char c1 = 0, c2 = 0;
    if (!(row >> bin >> c1 >> x >> c2 >> y) || c1 != ',' || c2 != ',') {
      throw Error(ErrorKind::BadFormat, path.string() + ":" + std::to_string(lineno) +
                                            ": expected bin,x,y");
    }
    if (!geometry.contains(x, y)) {
      throw Error(ErrorKind::OutOfBounds, path.string() + ":" + std::to_string(lineno) +
                                              ": fixation outside the sensor");
    }
    if (bin < -1 || bin >= static_cast<long long>(bins)) {
      throw Error(ErrorKind::BadFormat, path.string() + ":" + std::to_string(lineno) +
                                            ": bin out of range");
    }
    const auto p = std::pair{static_cast<std::size_t>(x), static_cast<std::size_t>(y)};
    if (bin == -1) {
      for (auto& v : points) v.push_back(p);
    } else {
      points[static_cast<std::size_t>(bin)].push_back(p);
    }
  }
  std::vector<FixationSet> out;
  for (auto& v : points) out.emplace_back(geometry, std::move(v));
  return out;
}

void write_fixations(const std::vector<FixationSet>& sets, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "bin,x,y\n";
  for (std::size_t b = 0; b < sets.size(); ++b) {
    for (const auto& [x, y] : sets[b].points()) out << b << ',' << x << ',' << y << '\n';
  }
  write_file_atomic(path, out.str());
}

std::string expand_bin_pattern(const std::string& pattern, std::size_t bin) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern.compare(i, 4, "{bin") == 0) {
      const std::size_t close = pattern.find('}', i);
      if (close == std::string::npos) {
        throw Error(ErrorKind::BadFormat, "unterminated {bin} in " + pattern);
      }
      const std::string spec = pattern.substr(i + 4, close - i - 4);
      std::string digits = std::to_string(bin);
      if (!spec.empty()) {
        if (spec[0] != ':' || spec.size() < 2 ||
            spec.find_first_not_of("0123456789", 1) != std::string::npos) {
          throw Error(ErrorKind::BadFormat, "bad bin placeholder in " + pattern);
        }
        const auto width = static_cast<std::size_t>(std::stoul(spec.substr(1)));
        if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
      }
      out += digits;
      i = close + 1;
    } else {
      out += pattern[i++];
    }
  }
  return out;
}

Dataset load_manifest(const std::filesystem::path& path, const VoxelConfig& voxel) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string events, gt, fix, extra;
    if (!(row >> events)) continue;
    if (!(row >> gt >> fix) || (row >> extra)) {
      throw Error(ErrorKind::BadFormat, path.string() + ":" + std::to_string(lineno) +
                                            ": expected <events> <gt pattern> <fixations>");
    }
    const EventStream stream = read_events(resolve(events));
    Sample s{voxelize(stream, voxel.bins, voxel.bin_duration_us, voxel.origin_us), {}, {}};
    for (std::size_t b = 0; b < voxel.bins; ++b) {
      s.gt.push_back(read_map(resolve(expand_bin_pattern(gt, b))));
    }
    s.fixations = read_fixations(resolve(fix), stream.geometry, voxel.bins);
    s.validate();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw Error(ErrorKind::EmptyDataset, "manifest " + path.string() + " lists no samples");
  return out;
}

}  // namespace evsal
