#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/confusion.hpp"
#include "capsroute/dataset.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/model.hpp"

namespace capsroute {

struct EpochMetrics {
  std::size_t epoch = 0;
  /// Mean per-sequence loss components over the epoch's training batches.
  LossBreakdown loss;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_test_accuracy = 0.0;
  bool early_stopped = false;
};

struct TrainOptions {
  /// Where metrics.csv, run_record.json, checkpoint.caps, last.caps and
  /// confusion.csv go. Empty: nothing is written.
  std::filesystem::path out_dir;
  /// Called after every epoch.
  std::function<void(const EpochMetrics&)> on_epoch;
  /// 0 uses worker_threads().
  std::size_t threads = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion{{}};
  std::vector<std::size_t> predictions;
  /// Per-sequence class distributions, flattened [count * N].
  std::vector<double> probabilities;
};

/// Prepared training data: the (possibly augmented) training stream, the
/// unaugmented training sequences and the test sequences.
struct TrainingData {
  std::vector<std::string> labels;
  std::vector<FrameSequence> train;
  std::vector<FrameSequence> train_clean;
  std::vector<FrameSequence> test;

  static TrainingData load(const std::filesystem::path& manifest, const RunConfig& cfg);
};

/// Trains a fresh model seeded from cfg.training.seed.
TrainResult train(const RunConfig& cfg, const TrainingData& data, const TrainOptions& options = {});
TrainResult train(const RunConfig& cfg, const std::filesystem::path& manifest,
                  const TrainOptions& options = {});

/// Continues training an existing model (used by train()).
TrainResult train_model(CapsuleLstmModel& model, const RunConfig& cfg, const TrainingData& data,
                        const TrainOptions& options = {});

EvalResult evaluate(const CapsuleLstmModel& model, const std::vector<FrameSequence>& sequences,
                    const std::vector<std::string>& labels, std::size_t threads = 0);

/// Loads a checkpoint, checks it against the manifest's class count and
/// evaluates the requested split.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::filesystem::path& manifest, Split split,
                               const DataConfig& data = {});

/// metrics.csv with header epoch,margin,reconstruction,lstm_ce,total,train_acc,test_acc.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& epochs);

struct AblationRow {
  std::string loss_config;
  std::string description;
  double accuracy = 0.0;
  std::string status;  // "ok" or the failure message
};

/// Trains every named loss configuration with the base config's seeds and
/// data. Failed runs are recorded and the remaining ones still run. Writes
/// <out>/ablation.csv and one sub-directory per configuration.
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::filesystem::path& manifest,
                                      const std::filesystem::path& out_dir,
                                      const TrainOptions& options = {});

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace capsroute
