#include "capsroute/trainer.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "capsroute/adam.hpp"
#include "capsroute/checkpoint.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/lstm.hpp"
#include "capsroute/parallel.hpp"
#include "capsroute/random.hpp"

namespace capsroute {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 0x100000;

std::string fmt(const char* spec, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, value);
  return buf;
}

std::string non_finite_component(const LossBreakdown& b) {
  if (!std::isfinite(b.margin)) return "margin";
  if (!std::isfinite(b.reconstruction)) return "reconstruction";
  if (!std::isfinite(b.lstm_ce)) return "lstm";
  return "total";
}

nlohmann::json to_json(const EpochMetrics& m, double seconds) {
  return {{"epoch", m.epoch},
          {"margin", m.loss.margin},
          {"reconstruction", m.loss.reconstruction},
          {"lstm_ce", m.loss.lstm_ce},
          {"total", m.loss.total},
          {"train_acc", m.train_accuracy},
          {"test_acc", m.test_accuracy},
          {"wall_clock_seconds", seconds}};
}

}  // namespace

TrainingData TrainingData::load(const fs::path& manifest, const RunConfig& cfg) {
  LoadOptions options{cfg.data, cfg.arch.sequence_length, cfg.arch.input_size};
  TrainingData data;
  auto train_stream = load_dataset(manifest, Split::kTrain, cfg.data.augment, options);
  data.labels = train_stream.manifest().labels;
  data.train = materialize(train_stream);
  if (cfg.data.augment) {
    auto clean = load_dataset(manifest, Split::kTrain, false, options);
    data.train_clean = materialize(clean);
  } else {
    data.train_clean = data.train;
  }
  auto test = load_dataset(manifest, Split::kTest, false, options);
  data.test = materialize(test);
  return data;
}

EvalResult evaluate(const CapsuleLstmModel& model, const std::vector<FrameSequence>& sequences,
                    const std::vector<std::string>& labels, std::size_t threads) {
  if (labels.size() != model.num_classes()) {
    throw ConfigError("model has " + std::to_string(model.num_classes()) +
                      " classes but the dataset has " + std::to_string(labels.size()));
  }
  auto probs = parallel_map(
      sequences.size(), [&](std::size_t i) { return model.predict(sequences[i].frames); },
      threads == 0 ? worker_threads() : threads);
  EvalResult result;
  result.confusion = ConfusionMatrix(labels);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const std::size_t predicted = classify(probs[i]);
    result.predictions.push_back(predicted);
    result.confusion.add(sequences[i].label, predicted);
    for (double p : probs[i].data()) result.probabilities.push_back(p);
  }
  result.accuracy = result.confusion.accuracy();
  return result;
}

EvalResult evaluate_checkpoint(const fs::path& checkpoint, const fs::path& manifest_path,
                               Split split, const DataConfig& data) {
  const auto file = CheckpointFile::read(checkpoint);
  const auto arch = checkpoint_architecture(file);
  const auto manifest = DatasetManifest::load(manifest_path);
  if (manifest.num_classes() != arch.num_classes) {
    throw VersionError("checkpoint has " + std::to_string(arch.num_classes) +
                       " classes but the manifest defines " +
                       std::to_string(manifest.num_classes()));
  }
  CapsuleLstmModel model(arch, arch.num_classes, 0);
  load_parameters(file, model);
  LoadOptions options{data, arch.sequence_length, arch.input_size};
  auto stream = load_dataset(manifest_path, split, false, options);
  return evaluate(model, materialize(stream), manifest.labels);
}

void write_metrics_csv(const fs::path& path, const std::vector<EpochMetrics>& epochs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,margin,reconstruction,lstm_ce,total,train_acc,test_acc\n";
  for (const auto& m : epochs) {
    out << m.epoch << ',' << fmt("%.17g", m.loss.margin) << ','
        << fmt("%.17g", m.loss.reconstruction) << ',' << fmt("%.17g", m.loss.lstm_ce) << ','
        << fmt("%.17g", m.loss.total) << ',' << fmt("%.6f", m.train_accuracy) << ','
        << fmt("%.6f", m.test_accuracy) << '\n';
  }
}

TrainResult train(const RunConfig& cfg, const TrainingData& data, const TrainOptions& options) {
  CapsuleLstmModel model(cfg.arch, data.labels.size(), derive_seed(cfg.training.seed, kInitStream));
  return train_model(model, cfg, data, options);
}

TrainResult train(const RunConfig& cfg, const fs::path& manifest, const TrainOptions& options) {
  return train(cfg, TrainingData::load(manifest, cfg), options);
}

TrainResult train_model(CapsuleLstmModel& model, const RunConfig& cfg, const TrainingData& data,
                        const TrainOptions& options) {
  const auto& tc = cfg.training;
  if (tc.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (data.train.empty()) throw ConfigError("the training split is empty");
  cfg.loss.validate();

  const std::size_t threads = options.threads == 0 ? worker_threads() : options.threads;
  const bool write = !options.out_dir.empty();
  if (write) fs::create_directories(options.out_dir);

  const ParameterList& params = model.parameters();
  AdamState state = AdamState::for_parameters(params);
  const auto hp = AdamHyperParams::from(tc);

  nlohmann::json record;
  record["seed"] = tc.seed;
  record["config"] = cfg.to_key_values().entries();
  record["labels"] = data.labels;
  record["threads"] = threads;
  record["epochs"] = nlohmann::json::array();
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  double best_test = -1.0;
  double best_train = -1.0;
  std::size_t stagnant = 0;
  bool out_of_steps = false;

  for (std::size_t epoch = 1; epoch <= tc.epochs && !out_of_steps; ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(tc.seed, kShuffleStream + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_loss;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, order.size() - start);
      auto members = parallel_map(
          count,
          [&](std::size_t k) {
            const auto& seq = data.train[order[start + k]];
            GradientTape tape;
            JointLoss loss = model.sequence_loss(tape, seq.frames, seq.label, cfg.loss);
            if (!std::isfinite(loss.breakdown.total)) {
              throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": " +
                                    non_finite_component(loss.breakdown) +
                                    " loss is not finite (sequence " + seq.source_id + ")");
            }
            return std::make_pair(tape.backward(loss.total), loss.breakdown);
          },
          threads);

      for (const auto& p : params) {
        Tensor value = p.value;
        value.zero_grad();
        for (const auto& [grads, breakdown] : members) {
          grads.accumulate_into(value, 1.0 / static_cast<double>(count));
        }
        for (double g : value.grad()) {
          if (!std::isfinite(g)) {
            throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                  ": gradient of " + p.name + " is not finite");
          }
        }
      }
      for (const auto& [grads, breakdown] : members) epoch_loss += breakdown;
      seen += count;

      adam_step(params, state, hp);
      ++result.steps;
      if (tc.max_steps != 0 && result.steps >= tc.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = epoch_loss.scaled(1.0 / static_cast<double>(seen));
    m.train_accuracy = evaluate(model, data.train_clean, data.labels, threads).accuracy;
    EvalResult test_eval;
    if (!data.test.empty()) {
      test_eval = evaluate(model, data.test, data.labels, threads);
      m.test_accuracy = test_eval.accuracy;
    }
    result.epochs.push_back(m);

    const bool improved = m.test_accuracy > best_test ||
                          (m.test_accuracy == best_test && m.train_accuracy > best_train);
    if (improved) {
      best_test = m.test_accuracy;
      best_train = m.train_accuracy;
      result.best_epoch = epoch;
      result.best_test_accuracy = m.test_accuracy;
      stagnant = 0;
    } else {
      ++stagnant;
    }

    if (write) {
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      write_metrics_csv(options.out_dir / "metrics.csv", result.epochs);
      record["epochs"].push_back(to_json(m, seconds));
      record["steps"] = result.steps;
      record["best_epoch"] = result.best_epoch;
      record["best_test_acc"] = result.best_test_accuracy;
      record["wall_clock_seconds"] = seconds;
      std::ofstream(options.out_dir / "run_record.json", std::ios::trunc) << record.dump(2) << '\n';
      save_checkpoint(options.out_dir / "last.caps", model);
      if (improved) {
        save_checkpoint(options.out_dir / "checkpoint.caps", model);
        if (!data.test.empty()) test_eval.confusion.save_csv(options.out_dir / "confusion.csv");
      }
    }
    if (options.on_epoch) options.on_epoch(m);

    if (tc.early_stop_patience != 0 && stagnant >= tc.early_stop_patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "loss_config,description,accuracy,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (auto& c : status) {
      if (c == '\n' || c == '\r' || c == ',') c = ' ';
    }
    out << r.loss_config << ",\"" << r.description << "\"," << fmt("%.6f", r.accuracy) << ','
        << status << '\n';
  }
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const fs::path& manifest,
                                      const fs::path& out_dir, const TrainOptions& options) {
  fs::create_directories(out_dir);
  const TrainingData data = TrainingData::load(manifest, base);
  std::vector<AblationRow> rows;
  for (auto name : LossConfig::kNames) {
    RunConfig cfg = base;
    cfg.loss = LossConfig::from_name(name);
    AblationRow row{std::string(name), cfg.loss.description(), 0.0, "ok"};
    try {
      TrainOptions sub = options;
      sub.out_dir = out_dir / std::string(name);
      row.accuracy = train(cfg, data, sub).best_test_accuracy;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
    rows.push_back(row);
    write_ablation_csv(out_dir / "ablation.csv", rows);
  }
  return rows;
}

}  // namespace capsroute
