#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "capsroute/checkpoint.hpp"
#include "capsroute/config.hpp"
#include "capsroute/dataset.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/image.hpp"
#include "capsroute/synthetic.hpp"
#include "capsroute/trainer.hpp"

namespace fs = std::filesystem;
using namespace capsroute;

namespace {

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

void print_epoch(const EpochMetrics& m) {
  std::printf("epoch %3zu  margin %.5f  recon %.5f  lstm %.5f  total %.5f  train %.3f  test %.3f\n",
              m.epoch, m.loss.margin, m.loss.reconstruction, m.loss.lstm_ce, m.loss.total,
              m.train_accuracy, m.test_accuracy);
  std::fflush(stdout);
}

void write_frames(const Tensor& frames, const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t s = frames.dim(2);
  for (std::size_t t = 0; t < frames.dim(0); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", t);
    write_png(dir / name, to_raster(frame_at(frames, t).view(Shape{1, s, s})));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule network + LSTM video expression classifier"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, checkpoint_path, split_name = "test";
  std::string in_dir;

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_path, "dataset manifest")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "CAPS checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_path, "dataset manifest")->required();
  eval_cmd->add_option("--split", split_name, "train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  eval_cmd->add_option("--config", config_path, "config with the split settings used in training")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", out_dir, "directory for confusion.csv (default: next to the checkpoint)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train every loss configuration");
  ablate_cmd->add_option("--config", config_path, "base config")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--data", data_path, "dataset manifest")->required();
  ablate_cmd->add_option("--out", out_dir, "output directory")->required();

  SyntheticOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic moving-bar dataset");
  synth_cmd->add_option("--classes", synth.num_classes, "number of classes")->required();
  synth_cmd->add_option("--per-class", synth.sequences_per_class, "sequences per class")->required();
  synth_cmd->add_option("--seed", synth.seed, "random seed")->required();
  synth_cmd->add_option("--frames", synth.frames, "frames per sequence")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "frame side in pixels")->capture_default_str();
  synth_cmd->add_option("--out", out_dir, "output directory")->required();

  bool augment = false;
  std::size_t frame_size = 48;
  std::size_t length = 16;
  auto* pre_cmd = app.add_subcommand("preprocess", "Normalise a directory of frames");
  pre_cmd->add_option("--in", in_dir, "directory of PNG frames")->required()->check(CLI::ExistingDirectory);
  pre_cmd->add_option("--out", out_dir, "output directory")->required();
  pre_cmd->add_flag("--augment", augment, "also write the 8 augmented variants");
  pre_cmd->add_option("--size", frame_size, "output side in pixels")->capture_default_str();
  pre_cmd->add_option("--length", length, "frames kept from the middle")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      const RunConfig cfg = load_config(config_path);
      TrainOptions options;
      options.out_dir = out_dir;
      options.on_epoch = print_epoch;
      const auto result = train(cfg, data_path, options);
      std::printf("best test accuracy %.4f at epoch %zu after %zu steps\n",
                  result.best_test_accuracy, result.best_epoch, result.steps);
    } else if (eval_cmd->parsed()) {
      const RunConfig cfg = load_config(config_path);
      const auto result = evaluate_checkpoint(checkpoint_path, data_path, parse_split(split_name), cfg.data);
      const fs::path dir = out_dir.empty() ? fs::path(checkpoint_path).parent_path() : fs::path(out_dir);
      if (!dir.empty()) fs::create_directories(dir);
      result.confusion.save_csv(dir / "confusion.csv");
      std::printf("accuracy %.4f (%zu sequences)\n", result.accuracy, result.confusion.total());
      std::cout << result.confusion.to_table();
    } else if (ablate_cmd->parsed()) {
      const RunConfig cfg = load_config(config_path);
      TrainOptions options;
      options.on_epoch = print_epoch;
      const auto rows = run_ablation(cfg, data_path, out_dir, options);
      for (const auto& r : rows) {
        std::printf("%-4s %.4f %s\n", r.loss_config.c_str(), r.accuracy, r.status.c_str());
      }
    } else if (synth_cmd->parsed()) {
      const auto manifest = generate_synthetic(out_dir, synth);
      std::printf("wrote %zu sequences to %s\n", manifest.entries.size(), out_dir.c_str());
    } else if (pre_cmd->parsed()) {
      const Tensor frames = load_sequence_frames(in_dir, length, frame_size);
      if (augment) {
        FrameSequence seq{frames, 0, "orig"};
        const char* names[] = {"orig", "mirror", "rot+5", "rot+10", "rot+15", "rot-5", "rot-10", "rot-15"};
        const auto variants = augment_x8(seq);
        for (std::size_t k = 0; k < variants.size(); ++k) {
          write_frames(variants[k].frames, fs::path(out_dir) / names[k]);
        }
      } else {
        write_frames(frames, out_dir);
      }
      std::printf("wrote %zu frames per variant to %s\n", length, out_dir.c_str());
    }
  } catch (const SequenceTooShortError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
