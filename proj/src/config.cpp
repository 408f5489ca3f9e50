#include "evsal/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "evsal/error.hpp"

namespace evsal {

VoxelConfig Settings::voxel() const {
  const double us = bin_ms * 1000.0;
  return {model.bins, static_cast<std::int64_t>(std::llround(us)), origin_us};
}

void Settings::validate() const {
  sim.validate();
  if (!(bin_ms > 0) || !std::isfinite(bin_ms) || voxel().bin_duration_us <= 0) {
    throw Error(ErrorKind::InvalidBinning, "bin duration must be at least 1 us");
  }
  model.validate();
  loss.validate();
  train.validate();
  if (!(gradcheck.h > 0) || !(gradcheck.tolerance > 0) || gradcheck.batch == 0 ||
      gradcheck.bins == 0) {
    throw Error(ErrorKind::InvalidConfig, "gradcheck settings must be positive");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorKind::InvalidConfig, key + ": '" + value + "' is not " + want);
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer in range");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string real_text(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

struct Entry {
  std::string key;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

template <typename T>
Entry size_entry(std::string key, T Settings::*section, std::size_t T::*field) {
  const std::string k = key;
  return {std::move(key),
          [=](Settings& s, const std::string& v) { (s.*section).*field = parse_int<std::size_t>(k, v); },
          [=](const Settings& s) { return std::to_string((s.*section).*field); }};
}

template <typename T>
Entry real_entry(std::string key, T Settings::*section, double T::*field) {
  const std::string k = key;
  return {std::move(key),
          [=](Settings& s, const std::string& v) { (s.*section).*field = parse_real(k, v); },
          [=](const Settings& s) { return real_text((s.*section).*field); }};
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(real_entry("sim.c_pos", &Settings::sim, &SimConfig::c_pos));
    e.push_back(real_entry("sim.c_neg", &Settings::sim, &SimConfig::c_neg));
    e.push_back({"sim.refractory_us",
                 [](Settings& s, const std::string& v) {
                   s.sim.refractory_us = parse_int<std::int64_t>("sim.refractory_us", v);
                 },
                 [](const Settings& s) { return std::to_string(s.sim.refractory_us); }});
    e.push_back(real_entry("sim.log_eps", &Settings::sim, &SimConfig::log_eps));

    e.push_back({"voxel.bin_ms",
                 [](Settings& s, const std::string& v) { s.bin_ms = parse_real("voxel.bin_ms", v); },
                 [](const Settings& s) { return real_text(s.bin_ms); }});
    e.push_back({"voxel.origin_us",
                 [](Settings& s, const std::string& v) {
                   s.origin_us = parse_int<std::int64_t>("voxel.origin_us", v);
                 },
                 [](const Settings& s) { return std::to_string(s.origin_us); }});

    e.push_back(size_entry("model.height", &Settings::model, &ModelConfig::height));
    e.push_back(size_entry("model.width", &Settings::model, &ModelConfig::width));
    e.push_back(size_entry("model.bins", &Settings::model, &ModelConfig::bins));
    e.push_back(size_entry("model.fusion_depth", &Settings::model, &ModelConfig::fusion_depth));
    e.push_back(size_entry("model.mlp_ratio", &Settings::model, &ModelConfig::mlp_ratio));
    e.push_back(real_entry("model.leaky_slope", &Settings::model, &ModelConfig::leaky_slope));
    e.push_back(real_entry("model.blur_sigma", &Settings::model, &ModelConfig::blur_sigma));
    e.push_back(size_entry("model.blur_radius", &Settings::model, &ModelConfig::blur_radius));
    e.push_back(size_entry("model.decoder_kt", &Settings::model, &ModelConfig::decoder_kt));
    e.push_back({"model.center_bias",
                 [](Settings& s, const std::string& v) {
                   s.model.center_bias = parse_bool("model.center_bias", v);
                 },
                 [](const Settings& s) { return std::string(s.model.center_bias ? "true" : "false"); }});
    e.push_back({"model.decoder",
                 [](Settings& s, const std::string& v) {
                   if (v == "conv3d") {
                     s.model.decoder = DecoderKind::Conv3d;
                   } else if (v == "conv2d") {
                     s.model.decoder = DecoderKind::Conv2d;
                   } else {
                     bad_value("model.decoder", v, "conv3d or conv2d");
                   }
                 },
                 [](const Settings& s) {
                   return std::string(s.model.decoder == DecoderKind::Conv3d ? "conv3d" : "conv2d");
                 }});
    for (std::size_t i = 0; i < 4; ++i) {
      const std::string prefix = "model.stage" + std::to_string(i + 1) + ".";
      auto stage_field = [&](const std::string& name, std::size_t StageConfig::*field) {
        const std::string key = prefix + name;
        e.push_back({key,
                     [=](Settings& s, const std::string& v) {
                       s.model.stages[i].*field = parse_int<std::size_t>(key, v);
                     },
                     [=](const Settings& s) { return std::to_string(s.model.stages[i].*field); }});
      };
      stage_field("depth", &StageConfig::depth);
      stage_field("channels", &StageConfig::channels);
      stage_field("downsample", &StageConfig::downsample);
      stage_field("window", &StageConfig::window);
      stage_field("heads", &StageConfig::heads);
    }

    e.push_back(real_entry("loss.alpha1", &Settings::loss, &LossWeights::alpha1));
    e.push_back(real_entry("loss.alpha2", &Settings::loss, &LossWeights::alpha2));
    e.push_back(real_entry("loss.eps", &Settings::loss, &LossWeights::eps));

    e.push_back(real_entry("train.lr", &Settings::train, &TrainConfig::lr));
    e.push_back(size_entry("train.batch_size", &Settings::train, &TrainConfig::batch_size));
    e.push_back(size_entry("train.epochs", &Settings::train, &TrainConfig::max_epochs));
    e.push_back(size_entry("train.early_stop_patience", &Settings::train, &TrainConfig::early_stop_patience));
    e.push_back(size_entry("train.plateau_patience", &Settings::train, &TrainConfig::plateau_patience));
    e.push_back(real_entry("train.plateau_factor", &Settings::train, &TrainConfig::plateau_factor));
    e.push_back(real_entry("train.improvement_threshold", &Settings::train, &TrainConfig::improvement_threshold));
    e.push_back(real_entry("train.weight_decay", &Settings::train, &TrainConfig::weight_decay));
    e.push_back(real_entry("train.beta1", &Settings::train, &TrainConfig::beta1));
    e.push_back(real_entry("train.beta2", &Settings::train, &TrainConfig::beta2));
    e.push_back(real_entry("train.adam_eps", &Settings::train, &TrainConfig::adam_eps));
    e.push_back(size_entry("train.max_steps", &Settings::train, &TrainConfig::max_steps));

    e.push_back(real_entry("gradcheck.h", &Settings::gradcheck, &GradCheckConfig::h));
    e.push_back(real_entry("gradcheck.tolerance", &Settings::gradcheck, &GradCheckConfig::tolerance));
    e.push_back(size_entry("gradcheck.batch", &Settings::gradcheck, &GradCheckConfig::batch));
    e.push_back(size_entry("gradcheck.bins", &Settings::gradcheck, &GradCheckConfig::bins));
    e.push_back(size_entry("gradcheck.samples", &Settings::gradcheck, &GradCheckConfig::samples));
    e.push_back({"gradcheck.method",
                 [](Settings& s, const std::string& v) {
                   if (v == "central") {
                     s.gradcheck.method = Difference::Central;
                   } else if (v == "ridders") {
                     s.gradcheck.method = Difference::Ridders;
                   } else {
                     bad_value("gradcheck.method", v, "central or ridders");
                   }
                 },
                 [](const Settings& s) {
                   return std::string(s.gradcheck.method == Difference::Central ? "central" : "ridders");
                 }});

    e.push_back({"seed",
                 [](Settings& s, const std::string& v) { s.seed = parse_int<std::uint64_t>("seed", v); },
                 [](const Settings& s) { return std::to_string(s.seed); }});
    return e;
  }();
  return entries;
}

}  // namespace

void set_config_value(Settings& settings, const std::string& key, const std::string& value) {
  for (const Entry& e : registry()) {
    if (e.key == key) {
      e.set(settings, value);
      if (key == "seed") settings.train.seed = settings.seed;
      return;
    }
  }
  throw Error(ErrorKind::UnknownKey, "unknown config key '" + key + "'");
}

void apply_config_text(Settings& settings, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::InvalidConfig, origin + ":" + std::to_string(lineno) +
                                                ": expected key = value");
    }
    try {
      set_config_value(settings, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& err) {
      throw Error(err.kind(), origin + ":" + std::to_string(lineno) + ": " + err.detail());
    }
  }
}

void apply_config_file(Settings& settings, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(settings, text.str(), path.string());
}

std::string to_config_text(const Settings& settings) {
  std::ostringstream out;
  for (const Entry& e : registry()) out << e.key << " = " << e.get(settings) << '\n';
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Entry& e : registry()) keys.push_back(e.key);
  return keys;
}

}  // namespace evsal
