#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evsal/dataset.hpp"
#include "evsal/losses.hpp"
#include "evsal/metrics.hpp"
#include "evsal/model.hpp"
#include "evsal/optim.hpp"

namespace evsal {

struct TrainConfig {
  double lr = 0.006;
  std::size_t batch_size = 2;
  std::size_t max_epochs = 30;
  std::size_t early_stop_patience = 3;
  std::size_t plateau_patience = 1;
  double plateau_factor = 0.1;
  // Relative margin a validation loss must beat the best by to count as an
  // improvement.
  double improvement_threshold = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Stop after this many optimizer steps (0: no limit).
  std::size_t max_steps = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // after this epoch's scheduler update
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

/// Reduce-on-plateau and early-stopping bookkeeping on a validation loss.
class PlateauTracker {
 public:
  PlateauTracker(double lr, const TrainConfig& cfg);

  /// Feeds one epoch's validation loss; returns true if it improved.
  bool update(double val_loss);
  double lr() const { return lr_; }
  bool should_stop() const;

 private:
  double lr_;
  double factor_;
  double threshold_;
  std::size_t plateau_patience_;
  std::size_t stop_patience_;
  std::optional<double> best_;
  std::size_t plateau_bad_ = 0;
  std::size_t stale_ = 0;
};

/// Mean combined loss over the dataset in eval mode.
double validation_loss(SestModel& model, const Dataset& data, const LossWeights& weights,
                       std::size_t batch_size);

/// AdamW over seeded shuffles; the model is left at its best-validation
/// state. Throws EmptyDataset or DivergedLoss.
TrainResult train(SestModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const LossWeights& weights = {});

void write_history_csv(const TrainResult& result, const std::filesystem::path& path);

struct EvalRow {
  std::size_t sample = 0;
  std::size_t bin = 0;
  MetricReport report;
};

struct EvalSummary {
  // Averaged over bins, then samples; unavailable entries are skipped.
  MetricReport mean;
  // Number of (sample, bin) entries that contributed to each metric.
  std::size_t n_auc_j = 0, n_cc = 0, n_sim = 0, n_nss = 0;
  std::vector<EvalRow> rows;
};

/// Predicted maps for one sample, one per bin.
using Predictor = std::function<std::vector<SaliencyMap>(const Sample&)>;

EvalSummary summarize(std::vector<EvalRow> rows);
EvalSummary evaluate(const Predictor& predict, const Dataset& data);
EvalSummary evaluate(SestModel& model, const Dataset& data);

/// Maps of one [B, T, 1, H, W] prediction for batch entry b.
std::vector<SaliencyMap> maps_of(const Tensor& prediction, std::size_t b);

void write_metrics_csv(const EvalSummary& summary, const std::filesystem::path& path);
std::string format_report(const EvalSummary& summary);

enum class AblationKind { NoCenterBias, Conv2dDecoder };

AblationKind parse_ablation(const std::string& name);
std::string to_string(AblationKind kind);

struct AblationResult {
  AblationKind kind;
  EvalSummary baseline;
  EvalSummary variant;
  TrainResult baseline_training;
  TrainResult variant_training;
  /// variant - baseline; empty where either side is unavailable.
  MetricReport delta;
};

ModelConfig ablation_variant(AblationKind kind, const ModelConfig& base);

/// Trains the baseline and the variant with identical seeds and data and
/// evaluates both on eval_set.
AblationResult run_ablation(AblationKind kind, const ModelConfig& base, const TrainConfig& cfg,
                            const LossWeights& weights, const Dataset& train_set,
                            const Dataset& val_set, const Dataset& eval_set,
                            std::uint64_t model_seed);

void write_delta_csv(const AblationResult& result, const std::filesystem::path& path);

}  // namespace evsal
