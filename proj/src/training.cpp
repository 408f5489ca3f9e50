#include "evsal/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "evsal/binary_io.hpp"
#include "evsal/error.hpp"

namespace evsal {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (!(lr > 0) || !std::isfinite(lr)) bad("learning rate must be positive");
  if (batch_size == 0) bad("batch size must be positive");
  if (max_epochs == 0) bad("epoch count must be positive");
  if (early_stop_patience == 0) bad("early-stop patience must be positive");
  if (plateau_patience == 0) bad("plateau patience must be positive");
  if (!(plateau_factor > 0 && plateau_factor < 1)) bad("plateau factor must lie in (0, 1)");
  if (!(improvement_threshold >= 0)) bad("improvement threshold must be non-negative");
  if (!(weight_decay >= 0)) bad("weight decay must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) bad("betas must lie in [0, 1)");
  if (!(adam_eps > 0)) bad("adam eps must be positive");
}

PlateauTracker::PlateauTracker(double lr, const TrainConfig& cfg)
    : lr_(lr),
      factor_(cfg.plateau_factor),
      threshold_(cfg.improvement_threshold),
      plateau_patience_(cfg.plateau_patience),
      stop_patience_(cfg.early_stop_patience) {}

bool PlateauTracker::update(double val_loss) {
  const bool improved = !best_ || val_loss < *best_ - threshold_ * std::abs(*best_);
  if (improved) {
    best_ = val_loss;
    plateau_bad_ = 0;
    stale_ = 0;
    return true;
  }
  ++stale_;
  if (++plateau_bad_ > plateau_patience_) {
    lr_ *= factor_;
    plateau_bad_ = 0;
  }
  return false;
}

bool PlateauTracker::should_stop() const { return stale_ >= stop_patience_; }

namespace {

std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order,
                                                 std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

double batch_loss(SestModel& model, const Dataset& data, const std::vector<std::size_t>& idx,
                  const LossWeights& weights, Tape& tape, ops::NormMode mode, Var* loss_out) {
  const Var x = tape.constant(batch_input(data, idx));
  Var pred;
  try {
    pred = model.forward(tape, x, mode);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NonFiniteActivation) {
      throw Error(ErrorKind::DivergedLoss, "training diverged: " + e.detail());
    }
    throw;
  }
  const Var loss = combined_loss(pred, batch_target(data, idx), weights);
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw Error(ErrorKind::DivergedLoss, "loss is not finite");
  if (loss_out) *loss_out = loss;
  return value;
}

}  // namespace

double validation_loss(SestModel& model, const Dataset& data, const LossWeights& weights,
                       std::size_t batch_size) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "empty validation set");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double total = 0.0;
  for (const auto& idx : batches_of(order, batch_size)) {
    Tape tape(false);
    total += batch_loss(model, data, idx, weights, tape, ops::NormMode::Eval, nullptr) *
             static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(SestModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "empty training set");
  if (val_set.empty()) throw Error(ErrorKind::EmptyDataset, "empty validation set");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<Parameter*> params = model.parameters();
  PlateauTracker tracker(cfg.lr, cfg);
  TrainResult result;
  std::vector<CheckpointRecord> best;
  std::size_t steps = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : batches_of(order, cfg.batch_size)) {
      zero_grads(params);
      Tape tape;
      Var loss;
      const double value =
          batch_loss(model, train_set, idx, weights, tape, ops::NormMode::Train, &loss);
      tape.backward(loss);
      adamw_step(params, {tracker.lr(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
      result.step_losses.push_back(value);
      epoch_total += value * static_cast<double>(idx.size());
      seen += idx.size();
      if (cfg.max_steps != 0 && ++steps >= cfg.max_steps) break;
    }
    const double val = validation_loss(model, val_set, weights, cfg.batch_size);
    if (best.empty() || val < result.best_val_loss) {
      best = model.records();
      result.best_epoch = epoch;
      result.best_val_loss = val;
    }
    tracker.update(val);
    result.history.push_back({epoch, epoch_total / static_cast<double>(seen), val, tracker.lr()});
    if (tracker.should_stop()) {
      result.early_stopped = true;
      break;
    }
    if (cfg.max_steps != 0 && steps >= cfg.max_steps) break;
  }
  model.load(best);
  return result;
}

void write_history_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17) << "epoch,train_loss,val_loss,lr\n";
  for (const EpochRecord& e : result.history) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<SaliencyMap> maps_of(const Tensor& prediction, std::size_t b) {
  const Shape& s = prediction.shape();
  if (s.size() != 5 || s[2] != 1 || b >= s[0]) {
    throw Error(ErrorKind::ShapeMismatch, "prediction " + shape_string(s) + " is not [B,T,1,H,W]");
  }
  const std::size_t plane = s[3] * s[4];
  std::vector<SaliencyMap> out;
  for (std::size_t t = 0; t < s[1]; ++t) {
    const double* p = prediction.ptr() + (b * s[1] + t) * plane;
    out.emplace_back(s[4], s[3], std::vector<double>(p, p + plane));
  }
  return out;
}

EvalSummary summarize(std::vector<EvalRow> rows) {
  EvalSummary out;
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::pair{a.sample, a.bin} < std::pair{b.sample, b.bin};
  });
  using Field = std::optional<double> MetricReport::*;
  const std::pair<Field, std::size_t EvalSummary::*> fields[] = {
      {&MetricReport::auc_j, &EvalSummary::n_auc_j},
      {&MetricReport::cc, &EvalSummary::n_cc},
      {&MetricReport::sim, &EvalSummary::n_sim},
      {&MetricReport::nss, &EvalSummary::n_nss},
  };
  for (const auto& [field, count] : fields) {
    double sample_sum = 0.0;
    std::size_t samples = 0;
    std::size_t i = 0;
    while (i < rows.size()) {
      const std::size_t sample = rows[i].sample;
      double bin_sum = 0.0;
      std::size_t bins = 0;
      for (; i < rows.size() && rows[i].sample == sample; ++i) {
        if (const auto& v = rows[i].report.*field) {
          bin_sum += *v;
          ++bins;
        }
      }
      out.*count += bins;
      if (bins > 0) {
        sample_sum += bin_sum / static_cast<double>(bins);
        ++samples;
      }
    }
    if (samples > 0) out.mean.*field = sample_sum / static_cast<double>(samples);
  }
  out.rows = std::move(rows);
  return out;
}

EvalSummary evaluate(const Predictor& predict, const Dataset& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "nothing to evaluate");
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data[i];
    s.validate();
    const std::vector<SaliencyMap> pred = predict(s);
    if (pred.size() != s.gt.size()) {
      throw Error(ErrorKind::ShapeMismatch, "predictor returned " + std::to_string(pred.size()) +
                                                " maps for " + std::to_string(s.gt.size()) + " bins");
    }
    for (std::size_t t = 0; t < pred.size(); ++t) {
      rows.push_back({i, t, evaluate_all(pred[t], s.gt[t], s.fixations[t])});
    }
  }
  return summarize(std::move(rows));
}

EvalSummary evaluate(SestModel& model, const Dataset& data) {
  return evaluate(
      [&model](const Sample& s) {
        const Dataset one{s};
        return maps_of(model.predict(batch_input(one, {0})), 0);
      },
      data);
}

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::setprecision(10) << *v;
  return s.str();
}

}  // namespace

void write_metrics_csv(const EvalSummary& summary, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "sample,bin,auc_j,cc,sim,nss\n";
  for (const EvalRow& r : summary.rows) {
    out << r.sample << ',' << r.bin << ',' << cell(r.report.auc_j) << ',' << cell(r.report.cc)
        << ',' << cell(r.report.sim) << ',' << cell(r.report.nss) << '\n';
  }
  write_file_atomic(path, out.str());
}

std::string format_report(const EvalSummary& summary) {
  std::ostringstream out;
  auto row = [&](const char* name, const std::optional<double>& v, std::size_t n) {
    out << std::left << std::setw(8) << name << std::right << std::setw(12);
    if (v) {
      out << std::fixed << std::setprecision(4) << *v;
    } else {
      out << "NA";
    }
    out << std::setw(8) << n << '\n';
  };
  out << std::left << std::setw(8) << "metric" << std::right << std::setw(12) << "mean"
      << std::setw(8) << "n" << '\n';
  row("AUC-J", summary.mean.auc_j, summary.n_auc_j);
  row("CC", summary.mean.cc, summary.n_cc);
  row("SIM", summary.mean.sim, summary.n_sim);
  row("NSS", summary.mean.nss, summary.n_nss);
  return out.str();
}

AblationKind parse_ablation(const std::string& name) {
  if (name == "no_center_bias") return AblationKind::NoCenterBias;
  if (name == "conv2d_decoder") return AblationKind::Conv2dDecoder;
  throw Error(ErrorKind::Usage, "unknown ablation '" + name +
                                    "' (expected no_center_bias or conv2d_decoder)");
}

std::string to_string(AblationKind kind) {
  return kind == AblationKind::NoCenterBias ? "no_center_bias" : "conv2d_decoder";
}

ModelConfig ablation_variant(AblationKind kind, const ModelConfig& base) {
  ModelConfig v = base;
  if (kind == AblationKind::NoCenterBias) {
    v.center_bias = false;
  } else {
    v.decoder = DecoderKind::Conv2d;
  }
  return v;
}

AblationResult run_ablation(AblationKind kind, const ModelConfig& base, const TrainConfig& cfg,
                            const LossWeights& weights, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& eval_set,
                            std::uint64_t model_seed) {
  AblationResult r{kind, {}, {}, {}, {}, {}};
  SestModel baseline(base, model_seed);
  r.baseline_training = train(baseline, train_set, val_set, cfg, weights);
  r.baseline = evaluate(baseline, eval_set);

  SestModel variant(ablation_variant(kind, base), model_seed);
  r.variant_training = train(variant, train_set, val_set, cfg, weights);
  r.variant = evaluate(variant, eval_set);

  auto diff = [](const std::optional<double>& a, const std::optional<double>& b) {
    return a && b ? std::optional<double>(*b - *a) : std::nullopt;
  };
  r.delta = {diff(r.baseline.mean.auc_j, r.variant.mean.auc_j),
             diff(r.baseline.mean.cc, r.variant.mean.cc),
             diff(r.baseline.mean.sim, r.variant.mean.sim),
             diff(r.baseline.mean.nss, r.variant.mean.nss)};
  return r;
}

void write_delta_csv(const AblationResult& result, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "metric,baseline,variant,delta\n";
  const std::pair<const char*, std::optional<double> MetricReport::*> fields[] = {
      {"auc_j", &MetricReport::auc_j},
      {"cc", &MetricReport::cc},
      {"sim", &MetricReport::sim},
      {"nss", &MetricReport::nss},
  };
  for (const auto& [name, f] : fields) {
    out << name << ',' << cell(result.baseline.mean.*f) << ',' << cell(result.variant.mean.*f)
        << ',' << cell(result.delta.*f) << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace evsal
