#include "evsal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "evsal/binary_io.hpp"
#include "evsal/checkpoint.hpp"
#include "evsal/config.hpp"
#include "evsal/dataset.hpp"
#include "evsal/esim.hpp"
#include "evsal/event_core.hpp"
#include "evsal/gradcheck.hpp"
#include "evsal/image.hpp"
#include "evsal/model.hpp"
#include "evsal/training.hpp"

namespace evsal {

namespace fs = std::filesystem;

ExitStatus exit_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::InvalidBinning:
    case ErrorKind::InvalidWindow:
    case ErrorKind::InvalidConfig:
    case ErrorKind::UnknownKey:
    case ErrorKind::WindowMismatch:
    case ErrorKind::BadSize:
    case ErrorKind::BadSigma:
      return kExitUsage;
    case ErrorKind::NonFiniteValue:
    case ErrorKind::NonFiniteActivation:
    case ErrorKind::DivergedLoss:
    case ErrorKind::RangeViolation:
    case ErrorKind::MissingGradient:
    case ErrorKind::NotScalarLoss:
    case ErrorKind::DetachedNode:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

namespace {

// Options shared by every command.
struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.lr=0.001")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", c.seed, "Seed for every random choice");
}

Settings load_settings(const Common& c) {
  Settings s;
  if (!c.config.empty()) apply_config_file(s, c.config);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Usage, "--set expects KEY=VALUE, got " + kv);
    set_config_value(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    s.seed = *c.seed;
    s.train.seed = *c.seed;
  }
  return s;
}

// Output directories are assembled next to their destination and moved into
// place only once complete.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    staging_ = target_;
    staging_ += ".partial";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StagedDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }
  const fs::path& path() const { return staging_; }
  void commit() {
    fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

std::string bin_name(std::size_t bin) {
  std::ostringstream s;
  s << "bin_" << std::setw(3) << std::setfill('0') << bin;
  return s.str();
}

std::vector<Frame> read_frames(const fs::path& dir, double fps) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "no frame directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto t = static_cast<std::int64_t>(std::llround(static_cast<double>(i) * 1e6 / fps));
    frames.push_back({t, read_pgm(files[i])});
  }
  return frames;
}

// Train/validation split used when no validation manifest is given: every
// fifth sample is held out, unless that would leave either side empty, in
// which case the training set doubles as validation.
std::pair<Dataset, Dataset> split_dataset(Dataset all) {
  Dataset train_set, val_set;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (i % 5 == 4 ? val_set : train_set).push_back(std::move(all[i]));
  }
  if (val_set.empty() || train_set.empty()) {
    for (Sample& s : val_set) train_set.push_back(std::move(s));
    val_set = train_set;
  }
  return {std::move(train_set), std::move(val_set)};
}

std::pair<Dataset, Dataset> load_datasets(const Settings& s, const std::string& manifest,
                                          const std::string& val_manifest) {
  Dataset all = load_manifest(manifest, s.voxel());
  if (!val_manifest.empty()) return {std::move(all), load_manifest(val_manifest, s.voxel())};
  return split_dataset(std::move(all));
}

fs::path sidecar(const fs::path& ckpt) {
  fs::path p = ckpt;
  p += ".cfg";
  return p;
}

std::vector<SaliencyMap> read_bin_maps(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "no map directory " + dir.string());
  std::map<std::size_t, fs::path> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string stem = e.path().stem().string();
    const std::string ext = e.path().extension().string();
    if (!e.is_regular_file() || (ext != ".pfm" && ext != ".pgm")) continue;
    if (stem.size() != 7 || stem.rfind("bin_", 0) != 0 ||
        stem.find_first_not_of("0123456789", 4) != std::string::npos) {
      continue;
    }
    const std::size_t bin = std::stoul(stem.substr(4));
    if (found.count(bin)) throw Error(ErrorKind::BadFormat, "two maps for " + stem + " in " + dir.string());
    found[bin] = e.path();
  }
  if (found.empty()) throw Error(ErrorKind::BadFormat, "no bin_NNN maps in " + dir.string());
  std::vector<SaliencyMap> maps;
  for (const auto& [bin, path] : found) {
    if (bin != maps.size()) throw Error(ErrorKind::BadFormat, "missing " + bin_name(maps.size()) + " in " + dir.string());
    maps.push_back(read_map(path));
  }
  return maps;
}

int cmd_simulate(const Common& c, const std::string& frames_dir, double fps, const std::string& out_path,
                 std::ostream& out) {
  const Settings s = load_settings(c);
  s.sim.validate();
  if (!(fps > 0) || !std::isfinite(fps)) throw Error(ErrorKind::Usage, "--fps must be positive");
  const std::vector<Frame> frames = read_frames(frames_dir, fps);
  const EventStream stream = simulate(frames, s.sim);
  write_events(stream, out_path);
  const double span = static_cast<double>(frames.back().timestamp - frames.front().timestamp) / 1e6;
  out << "events " << stream.events.size() << '\n'
      << "rate " << (span > 0 ? static_cast<double>(stream.events.size()) / span : 0.0) << " ev/s\n";
  return kExitOk;
}

int cmd_voxelize(const Common& c, const std::string& events_path, std::optional<std::size_t> bins,
                 std::optional<double> bin_ms, std::optional<std::int64_t> origin,
                 const std::string& out_dir, std::ostream& out) {
  Settings s = load_settings(c);
  if (bins) s.model.bins = *bins;
  if (bin_ms) s.bin_ms = *bin_ms;
  if (origin) s.origin_us = *origin;
  if (s.model.bins == 0) throw Error(ErrorKind::InvalidBinning, "bins must be at least 1");
  if (!(s.bin_ms > 0)) throw Error(ErrorKind::InvalidBinning, "bin duration must be positive");
  const VoxelConfig vc = s.voxel();
  const EventStream stream = read_events(events_path);
  const VoxelGrid grid = voxelize(stream, vc.bins, vc.bin_duration_us, vc.origin_us);

  StagedDir dir(out_dir);
  std::ostringstream index;
  index << "# bins " << vc.bins << " bin_duration_us " << vc.bin_duration_us << " origin_us "
        << vc.origin_us << " width " << stream.geometry.width << " height "
        << stream.geometry.height << "\n";
  for (std::size_t b = 0; b < vc.bins; ++b) {
    for (std::size_t ch = 0; ch < 2; ++ch) {
      Image img(stream.geometry.width, stream.geometry.height);
      for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) img(y, x) = static_cast<double>(grid.at(b, ch, y, x));
      }
      const std::string name = bin_name(b) + (ch == 0 ? "_pos.pfm" : "_neg.pfm");
      write_pfm(img, dir.path() / name);
      index << b << ' ' << (ch == 0 ? "pos" : "neg") << ' ' << name << '\n';
    }
  }
  write_file_atomic(dir.path() / "index.txt", index.str());
  dir.commit();
  out << "voxelized " << grid.total() << " of " << stream.events.size() << " events into "
      << vc.bins << " bins\n";
  return kExitOk;
}

void print_header(std::ostream& out, const Settings& s) { out << "# seed " << s.seed << '\n'; }

int cmd_train(const Common& c, const std::string& manifest, const std::string& val_manifest,
              const std::string& ckpt, std::string history, std::ostream& out) {
  const Settings s = load_settings(c);
  s.validate();
  print_header(out, s);
  auto [train_set, val_set] = load_datasets(s, manifest, val_manifest);
  SestModel model(s.model, s.seed);
  const TrainResult r = train(model, train_set, val_set, s.train, s.loss);
  for (const EpochRecord& e : r.history) {
    out << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr "
        << e.lr << '\n';
  }
  out << "best epoch " << r.best_epoch << " val " << r.best_val_loss << '\n';
  if (history.empty()) history = ckpt + ".history.csv";
  write_file_atomic(sidecar(ckpt), to_config_text(s));
  write_history_csv(r, history);
  save_checkpoint(model.records(), ckpt);
  return kExitOk;
}

SestModel load_model(const std::string& ckpt, Settings& s) {
  const fs::path cfg = sidecar(ckpt);
  if (!fs::exists(cfg)) throw Error(ErrorKind::Io, "missing model config " + cfg.string());
  apply_config_file(s, cfg);
  s.validate();
  SestModel model(s.model, s.seed);
  model.load(load_checkpoint(ckpt));
  return model;
}

int cmd_infer(const Common& c, const std::string& ckpt, const std::string& events_path,
              const std::string& out_dir, std::ostream& out) {
  Settings s;
  SestModel model = load_model(ckpt, s);
  // Flags and config given on the command line apply on top of the
  // checkpoint's own settings, except for the architecture.
  const ModelConfig arch = s.model;
  if (!c.config.empty()) apply_config_file(s, c.config);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Usage, "--set expects KEY=VALUE, got " + kv);
    set_config_value(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (s.model != arch) throw Error(ErrorKind::Usage, "model.* keys are fixed by the checkpoint");
  const VoxelConfig vc = s.voxel();
  const EventStream stream = read_events(events_path);
  if (stream.geometry.width != arch.width || stream.geometry.height != arch.height) {
    throw Error(ErrorKind::ShapeMismatch, "events are " + std::to_string(stream.geometry.width) + "x" +
                                              std::to_string(stream.geometry.height) + ", model expects " +
                                              std::to_string(arch.width) + "x" + std::to_string(arch.height));
  }
  const Tensor x = voxel_input({voxelize(stream, vc.bins, vc.bin_duration_us, vc.origin_us)});
  const std::vector<SaliencyMap> maps = maps_of(model.predict(x), 0);
  StagedDir dir(out_dir);
  for (std::size_t t = 0; t < maps.size(); ++t) write_pfm(maps[t], dir.path() / (bin_name(t) + ".pfm"));
  dir.commit();
  out << "wrote " << maps.size() << " maps to " << out_dir << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& fix_path,
             const std::string& csv, std::ostream& out) {
  const std::vector<SaliencyMap> pred = read_bin_maps(pred_dir);
  const std::vector<SaliencyMap> gt = read_bin_maps(gt_dir);
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::ShapeMismatch, std::to_string(pred.size()) + " predicted maps vs " +
                                              std::to_string(gt.size()) + " ground-truth maps");
  }
  const SensorGeometry g{static_cast<std::uint32_t>(gt[0].width), static_cast<std::uint32_t>(gt[0].height)};
  const std::vector<FixationSet> fix = read_fixations(fix_path, g, gt.size());
  std::vector<EvalRow> rows;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (pred[t].width != gt[t].width || pred[t].height != gt[t].height || gt[t].width != g.width ||
        gt[t].height != g.height) {
      throw Error(ErrorKind::ShapeMismatch, "map size differs for " + bin_name(t));
    }
    rows.push_back({0, t, evaluate_all(pred[t], gt[t], fix[t])});
  }
  const EvalSummary summary = summarize(std::move(rows));
  out << format_report(summary);
  if (!csv.empty()) write_metrics_csv(summary, csv);
  return kExitOk;
}

int cmd_gradcheck(const Common& c, std::ostream& out) {
  Settings s = load_settings(c);
  s.validate();
  print_header(out, s);
  ModelConfig mc = s.model;
  mc.bins = s.gradcheck.bins;
  SynthConfig sc;
  sc.width = mc.width;
  sc.height = mc.height;
  sc.bins = mc.bins;
  sc.sim = s.sim;
  const Dataset data = synth_dataset(sc, s.gradcheck.batch, s.seed);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = batch_input(data, idx);
  const Tensor y = batch_target(data, idx);
  SestModel model(mc, s.seed);
  const GradCheckResult r = grad_check_params(
      [&](Tape& tape) {
        return combined_loss(model.forward(tape, tape.constant(x), ops::NormMode::Train), y, s.loss);
      },
      model.parameters(), s.gradcheck.h, s.gradcheck.samples, s.seed, s.gradcheck.method);
  out << "checked " << r.checked << " coordinates\n"
      << "refined " << r.refined << " probes across kinks, skipped " << r.skipped << '\n'
      << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error
      << " at " << r.where << '[' << r.index << "]\n"
      << "tolerance " << s.gradcheck.tolerance << '\n';
  const bool ok = r.max_rel_error <= s.gradcheck.tolerance;
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kExitOk : kExitNumeric;
}

int cmd_ablate(const Common& c, const std::string& kind_name, const std::string& manifest,
               const std::string& val_manifest, const std::string& out_dir, std::ostream& out) {
  const AblationKind kind = parse_ablation(kind_name);
  const Settings s = load_settings(c);
  s.validate();
  print_header(out, s);
  auto [train_set, val_set] = load_datasets(s, manifest, val_manifest);
  const AblationResult r =
      run_ablation(kind, s.model, s.train, s.loss, train_set, val_set, val_set, s.seed);
  StagedDir dir(out_dir);
  write_metrics_csv(r.baseline, dir.path() / "baseline.csv");
  write_metrics_csv(r.variant, dir.path() / ("variant_" + to_string(kind) + ".csv"));
  write_delta_csv(r, dir.path() / "delta.csv");
  dir.commit();
  out << "baseline\n" << format_report(r.baseline) << to_string(kind) << '\n' << format_report(r.variant);
  return kExitOk;
}

int cmd_synth(const Common& c, std::size_t samples, const std::string& out_dir, std::ostream& out) {
  const Settings s = load_settings(c);
  s.validate();
  print_header(out, s);
  SynthConfig sc;
  sc.width = s.model.width;
  sc.height = s.model.height;
  sc.bins = s.model.bins;
  sc.bin_duration_us = s.voxel().bin_duration_us;
  sc.sim = s.sim;
  StagedDir dir(out_dir);
  std::ostringstream manifest;
  std::mt19937_64 seeds(s.seed);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::uint64_t seed = seeds();
    const SynthClip clip = synth_clip(sc, seed);
    const Sample sample = synth_sample(sc, seed);
    std::ostringstream name;
    name << "sample_" << std::setw(3) << std::setfill('0') << i;
    const fs::path sub = dir.path() / name.str();
    fs::create_directories(sub / "frames");
    fs::create_directories(sub / "gt");
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      std::ostringstream fname;
      fname << "frame_" << std::setw(4) << std::setfill('0') << f << ".pgm";
      write_pgm(clip.frames[f].intensity, sub / "frames" / fname.str());
    }
    write_events(simulate(clip.frames, sc.sim), sub / "events.evs");
    for (std::size_t b = 0; b < sample.gt.size(); ++b) write_pfm(sample.gt[b], sub / "gt" / (bin_name(b) + ".pfm"));
    write_fixations(sample.fixations, sub / "fixations.csv");
    manifest << name.str() << "/events.evs " << name.str() << "/gt/bin_{bin:3}.pfm " << name.str()
             << "/fixations.csv\n";
  }
  write_file_atomic(dir.path() / "manifest.txt", manifest.str());
  dir.commit();
  out << "wrote " << samples << " samples to " << out_dir << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-camera video saliency: simulate, voxelize, train, infer, evaluate", "evsal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "evsal 0.1.0");

  Common common;
  std::string frames_dir, events_path, out_path, manifest, val_manifest, ckpt, history;
  std::string pred_dir, gt_dir, fix_path, csv, kind;
  double fps = 10.0;
  std::optional<std::size_t> bins;
  std::optional<double> bin_ms;
  std::optional<std::int64_t> origin;
  std::size_t samples = 4;

  auto* sim = app.add_subcommand("simulate", "Convert a directory of PGM frames into an EVS1 event file");
  sim->add_option("--frames", frames_dir, "Directory of .pgm frames, read in name order")->required();
  sim->add_option("--fps", fps, "Frame rate of the input video")->capture_default_str();
  sim->add_option("--out", out_path, "Output .evs file")->required();
  add_common(sim, common);

  auto* vox = app.add_subcommand("voxelize", "Bin an event file into per-bin, per-polarity PFM count maps");
  vox->add_option("--events", events_path, "Input .evs file")->required();
  vox->add_option("--bins", bins, "Number of temporal bins (default model.bins)");
  vox->add_option("--bin-ms", bin_ms, "Bin duration in ms (default voxel.bin_ms = 100)");
  vox->add_option("--origin-us", origin, "Start of the first bin in us");
  vox->add_option("--out", out_path, "Output directory")->required();
  add_common(vox, common);

  auto* tr = app.add_subcommand("train", "Train a model on a dataset manifest");
  tr->add_option("--manifest", manifest, "Training manifest")->required();
  tr->add_option("--val-manifest", val_manifest, "Validation manifest (default: hold out every 5th sample)");
  tr->add_option("--out", ckpt, "Output checkpoint; its config goes to <out>.cfg")->required();
  tr->add_option("--history", history, "History CSV (default <out>.history.csv)");
  add_common(tr, common);

  auto* inf = app.add_subcommand("infer", "Predict saliency maps for an event file");
  inf->add_option("--checkpoint", ckpt, "Checkpoint written by train")->required();
  inf->add_option("--events", events_path, "Input .evs file")->required();
  inf->add_option("--out", out_path, "Output directory of bin_NNN.pfm maps")->required();
  add_common(inf, common);

  auto* ev = app.add_subcommand("eval", "Score predicted maps against ground truth and fixations");
  ev->add_option("--pred", pred_dir, "Directory of predicted bin_NNN.pfm/.pgm maps")->required();
  ev->add_option("--gt", gt_dir, "Directory of ground-truth bin_NNN.pfm/.pgm maps")->required();
  ev->add_option("--fixations", fix_path, "Fixation CSV (bin,x,y; bin -1 applies to all)")->required();
  ev->add_option("--csv", csv, "Per-bin metric CSV output");
  add_common(ev, common);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full model loss");
  add_common(gc, common);

  auto* ab = app.add_subcommand("ablate", "Train baseline and ablated variant and compare");
  ab->add_option("--kind", kind, "no_center_bias or conv2d_decoder")->required();
  ab->add_option("--manifest", manifest, "Training manifest")->required();
  ab->add_option("--val-manifest", val_manifest, "Validation/evaluation manifest");
  ab->add_option("--out", out_path, "Output directory for the report CSVs")->required();
  add_common(ab, common);

  auto* syn = app.add_subcommand("synth", "Write a synthetic moving-blob dataset with a manifest");
  syn->add_option("--samples", samples, "Number of clips")->capture_default_str();
  syn->add_option("--out", out_path, "Output directory")->required();
  add_common(syn, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(common, frames_dir, fps, out_path, out);
    if (*vox) return cmd_voxelize(common, events_path, bins, bin_ms, origin, out_path, out);
    if (*tr) return cmd_train(common, manifest, val_manifest, ckpt, history, out);
    if (*inf) return cmd_infer(common, ckpt, events_path, out_path, out);
    if (*ev) return cmd_eval(pred_dir, gt_dir, fix_path, csv, out);
    if (*gc) return cmd_gradcheck(common, out);
    if (*ab) return cmd_ablate(common, kind, manifest, val_manifest, out_path, out);
    if (*syn) return cmd_synth(common, samples, out_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_status_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace evsal
