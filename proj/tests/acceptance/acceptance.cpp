#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "capsroute/checkpoint.hpp"
#include "capsroute/dataset.hpp"
#include "capsroute/encoder.hpp"
#include "capsroute/image.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/lstm.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/synthetic.hpp"
#include "capsroute/trainer.hpp"
#include "routing_oracle.hpp"
#include "test_support.hpp"

using namespace capsroute;
using capsroute::testing::check_gradients;
using capsroute::testing::random_tensor;
using capsroute::testing::TempDir;

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig synthetic_config() {
  RunConfig cfg;
  cfg.arch.conv_channels = {8, 16};
  cfg.arch.primary_capsule_channels = 8;
  cfg.arch.primary_capsule_dim = 8;
  cfg.arch.decoder_hidden_sizes = {64, 128};
  cfg.arch.lstm_hidden = 32;
  cfg.data.augment = false;
  cfg.data.test_fraction = 0.3;
  cfg.training.learning_rate = 1e-3;
  cfg.training.batch_size = 4;
  cfg.training.epochs = 30;
  cfg.training.early_stop_patience = 30;
  cfg.training.seed = 1;
  return cfg;
}

// 2 classes x 14 sequences: 20 train and 8 test at test_fraction 0.3.
fs::path synthetic_dataset(const TempDir& dir) {
  SyntheticOptions opts;
  opts.num_classes = 2;
  opts.sequences_per_class = 14;
  opts.seed = 7;
  generate_synthetic(dir.path() / "data", opts);
  return dir.path() / "data" / "manifest.tsv";
}

Outcome routing_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> p_dist(1, 4), n_dist(1, 3), d_dist(1, 4), it_dist(1, 5);
  double worst_v = 0.0, worst_c = 0.0, worst_sum = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t P = p_dist(rng), N = n_dist(rng), D = d_dist(rng), iters = it_dist(rng);
    Tensor votes = random_tensor({P, N, D}, rng, -1.5, 1.5, false);
    GradientTape tape(false);
    RoutingTrace trace;
    Tensor v = dynamic_routing(tape, votes, iters, &trace);
    auto expected = oracle::scripted_routing(std::vector<double>(votes.data().begin(), votes.data().end()),
                                             P, N, D, iters);
    for (std::size_t k = 0; k < expected.v.size(); ++k) worst_v = std::max(worst_v, std::abs(v[k] - expected.v[k]));
    if (trace.couplings.size() != iters) return {false, "trace has wrong iteration count"};
    for (std::size_t r = 0; r < iters; ++r) {
      for (std::size_t k = 0; k < P * N; ++k) {
        worst_c = std::max(worst_c, std::abs(trace.couplings[r][k] - expected.couplings[r][k]));
      }
      for (std::size_t i = 0; i < P; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < N; ++j) row += trace.couplings[r][i * N + j];
        worst_sum = std::max(worst_sum, std::abs(row - 1.0));
      }
    }
  }
  const bool pass = worst_v <= 1e-6 && worst_c <= 1e-6 && worst_sum <= 1e-6;
  return {pass, "50 instances, max |v diff| " + fmt("%.2e", worst_v) + ", max |c diff| " + fmt("%.2e", worst_c) +
                    ", max |row sum - 1| " + fmt("%.2e", worst_sum)};
}

Outcome gradient_suite() {
  std::mt19937_64 rng(99);
  using Build = std::function<Tensor(GradientTape&)>;
  using Leaves = std::vector<std::pair<std::string, Tensor>>;
  struct Case {
    std::string name;
    Build build;
    Leaves leaves;
  };
  // sum(output * fixed random weights)
  auto contract = [&](const Shape& shape) {
    Tensor w = random_tensor(shape, rng, -1, 1, false);
    return [w](GradientTape& t, const Tensor& out) { return ops::sum(t, ops::mul(t, out, w)); };
  };
  std::vector<Case> cases;
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    auto c = contract({3, 2});
    cases.push_back({"matmul", [=](GradientTape& t) { return c(t, ops::matmul(t, a, b)); }, {{"a", a}, {"b", b}}});
  }
  {
    Tensor w = random_tensor({3, 5}, rng), x = random_tensor({5}, rng), b = random_tensor({3}, rng);
    auto c = contract({3});
    cases.push_back(
        {"linear", [=](GradientTape& t) { return c(t, ops::linear(t, w, x, b)); }, {{"w", w}, {"x", x}, {"b", b}}});
  }
  for (std::size_t stride : {1u, 2u}) {
    Tensor x = random_tensor({2, 7, 7}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    const std::size_t o = (7 - 3) / stride + 1;
    auto c = contract({3, o, o});
    cases.push_back({"conv2d/stride" + std::to_string(stride),
                     [=](GradientTape& t) { return c(t, ops::conv2d(t, x, k, b, stride)); },
                     {{"x", x}, {"k", k}, {"b", b}}});
  }
  {
    Tensor x = random_tensor({2, 3, 3}, rng), k = random_tensor({2, 3, 3, 3}, rng), b = random_tensor({3}, rng);
    auto c = contract({3, 7, 7});
    cases.push_back({"conv_transpose2d", [=](GradientTape& t) { return c(t, ops::conv_transpose2d(t, x, k, b, 2)); },
                     {{"x", x}, {"k", k}, {"b", b}}});
  }
  {
    Tensor x = random_tensor({2, 5, 5}, rng);
    auto c = contract({2, 3, 2});
    cases.push_back({"crop2d", [=](GradientTape& t) { return c(t, ops::crop2d(t, x, 1, 2, 3, 2)); }, {{"x", x}}});
  }
  {
    Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);
    auto c = contract({6});
    cases.push_back({"add", [=](GradientTape& t) { return c(t, ops::add(t, a, b)); }, {{"a", a}, {"b", b}}});
    cases.push_back({"sub", [=](GradientTape& t) { return c(t, ops::sub(t, a, b)); }, {{"a", a}, {"b", b}}});
    cases.push_back({"mul", [=](GradientTape& t) { return c(t, ops::mul(t, a, b)); }, {{"a", a}, {"b", b}}});
    cases.push_back({"scale", [=](GradientTape& t) { return c(t, ops::scale(t, a, -1.7)); }, {{"a", a}}});
    cases.push_back({"add_scalar", [=](GradientTape& t) { return c(t, ops::add_scalar(t, a, 0.3)); }, {{"a", a}}});
    cases.push_back({"sigmoid", [=](GradientTape& t) { return c(t, ops::sigmoid(t, a)); }, {{"a", a}}});
    cases.push_back({"tanh", [=](GradientTape& t) { return c(t, ops::tanh(t, a)); }, {{"a", a}}});
    cases.push_back({"softmax", [=](GradientTape& t) { return c(t, ops::softmax(t, a)); }, {{"a", a}}});
    cases.push_back({"l2norm", [=](GradientTape& t) { return ops::l2norm(t, a); }, {{"a", a}}});
    cases.push_back({"sum", [=](GradientTape& t) { return ops::sum(t, ops::mul(t, a, a)); }, {{"a", a}}});
    cases.push_back({"mean", [=](GradientTape& t) { return ops::mean(t, ops::mul(t, a, a)); }, {{"a", a}}});
  }
  {
    Tensor a = Tensor::from({-0.9, -0.4, 0.3, 0.8, -0.2, 0.6}, true);
    auto c = contract({6});
    cases.push_back({"relu", [=](GradientTape& t) { return c(t, ops::relu(t, a)); }, {{"a", a}}});
    Tensor p = random_tensor({6}, rng, 0.2, 2.0);
    cases.push_back({"log", [=](GradientTape& t) { return c(t, ops::log(t, p)); }, {{"p", p}}});
  }
  {
    Tensor a = random_tensor({2, 6}, rng), b = random_tensor({3, 6}, rng);
    auto c3 = contract({6, 3});
    auto c5 = contract({5, 6});
    auto c2 = contract({2, 6});
    cases.push_back({"reshape", [=](GradientTape& t) { return c3(t, ops::reshape(t, b, {6, 3})); },
                     {{"b", b}}});
    cases.push_back({"concat", [=](GradientTape& t) { return c5(t, ops::concat(t, {a, b})); }, {{"a", a}, {"b", b}}});
    cases.push_back({"slice", [=](GradientTape& t) { return c2(t, ops::slice(t, b, 1, 2)); }, {{"b", b}}});
    auto cr = contract({3});
    cases.push_back({"row_norms", [=](GradientTape& t) { return cr(t, ops::row_norms(t, b)); }, {{"b", b}}});
    auto cs = contract({3, 6});
    cases.push_back({"squash", [=](GradientTape& t) { return cs(t, squash(t, b)); }, {{"b", b}}});
  }
  {
    Tensor u = random_tensor({4, 3}, rng), w = random_tensor({2, 2, 3, 5}, rng);
    auto c = contract({4, 2, 5});
    cases.push_back({"compute_votes", [=](GradientTape& t) { return c(t, compute_votes(t, u, w)); },
                     {{"u", u}, {"w", w}}});
    Tensor votes = random_tensor({4, 2, 3}, rng);
    auto cv = contract({2, 3});
    cases.push_back({"dynamic_routing/1", [=](GradientTape& t) { return cv(t, dynamic_routing(t, votes, 1)); },
                     {{"votes", votes}}});
  }
  {
    Rng init(5);
    LstmParams p = LstmParams::init(2, 3, init);
    Tensor seq = random_tensor({4, 2, 1}, rng, 0, 1);
    Leaves leaves{{"seq", seq}};
    for (const auto& param : p.parameters()) leaves.emplace_back(param.name, param.value);
    cases.push_back({"lstm/bptt", [=](GradientTape& t) { return lstm_loss(t, sequence_forward(t, seq, p, 4), 1); },
                     leaves});
  }
  {
    Tensor caps = random_tensor({3, 4}, rng, -0.5, 0.5);
    cases.push_back({"margin_loss", [=](GradientTape& t) { return margin_loss(t, caps, 1); }, {{"caps", caps}}});
    Tensor img = random_tensor({1, 4, 4}, rng, 0, 1), rec = random_tensor({1, 4, 4}, rng, 0, 1);
    cases.push_back({"reconstruction_loss", [=](GradientTape& t) { return reconstruction_loss(t, img, rec); },
                     {{"rec", rec}}});
    Tensor probs = random_tensor({3}, rng, 0.1, 0.9);
    cases.push_back({"lstm_loss", [=](GradientTape& t) { return lstm_loss(t, probs, 2); }, {{"probs", probs}}});
  }

  double worst_primitive = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    auto r = check_gradients(c.build, c.leaves, 1e-5, 1e-8);
    if (r.max_error >= worst_primitive) {
      worst_primitive = r.max_error;
      worst_name = c.name + " " + r.worst;
    }
  }

  ArchitectureConfig micro;
  micro.num_classes = 2;
  micro.input_size = 16;
  micro.conv_channels = {3, 4};
  micro.primary_capsule_channels = 2;
  micro.primary_capsule_dim = 4;
  micro.capsule_dim = 6;
  micro.routing_iterations = 1;
  micro.decoder_hidden_sizes = {8, 12};
  micro.lstm_hidden = 8;
  micro.sequence_length = 4;
  CapsuleLstmModel model(micro, 2, 3);
  Tensor frames = random_tensor({4, 1, 16, 16}, rng, 0, 1, false);
  capsroute::testing::randomize_biases(model.parameters(), rng);
  Leaves params;
  for (const auto& p : model.parameters()) params.emplace_back(p.name, p.value);
  const auto loss_cfg = LossConfig::from_name("mrc");
  auto full = check_gradients([&](GradientTape& t) { return model.sequence_loss(t, frames, 1, loss_cfg).total; },
                              params, 1e-6, 1e-6);

  const bool pass = worst_primitive < 1e-4 && full.max_error < 1e-3;
  return {pass, std::to_string(cases.size()) + " primitives max rel err " + fmt("%.2e", worst_primitive) + " (" +
                    worst_name + "); micro-model " + std::to_string(full.checked) + " entries max rel err " +
                    fmt("%.2e", full.max_error)};
}

Outcome loss_hand_values() {
  GradientTape tape(false);
  auto capsule_with_norms = [](std::vector<double> norms) {
    Tensor m(Shape{norms.size(), 2});
    for (std::size_t i = 0; i < norms.size(); ++i) m.data()[i * 2] = norms[i];
    return m;
  };
  Tensor ones = Tensor::full({1, 48, 48}, 1.0);
  Tensor zeros(Shape{1, 48, 48});
  const double m1 = margin_loss(tape, capsule_with_norms({0.6}), 0).item();
  const double m2 = margin_loss(tape, capsule_with_norms({0.6, 0.6}), 0).item();
  const double rec = reconstruction_loss(tape, ones, zeros).item();
  const double ce = lstm_loss(tape, Tensor::from({0.5, 0.5}), 0).item();
  LossParts parts{Tensor::scalar(m1), Tensor::scalar(rec), Tensor::scalar(ce)};
  const double total = total_loss(tape, LossConfig::from_name("mrc"), parts).total.item();
  const std::vector<std::pair<double, double>> checks{
      {m1, 0.09}, {m2, 0.215}, {rec, 5e-4}, {ce, 0.34657}, {total, 0.43707}};
  double worst = 0.0;
  for (auto [got, want] : checks) worst = std::max(worst, std::abs(got - want));
  return {worst <= 1e-4, "margin " + fmt("%.5f", m1) + " / " + fmt("%.5f", m2) + ", reconstruction " +
                             fmt("%.5g", rec) + ", lstm " + fmt("%.5f", ce) + ", total " + fmt("%.5f", total)};
}

Outcome overfit_oracle() {
  TempDir dir("accept_overfit");
  auto manifest = synthetic_dataset(dir);
  RunConfig cfg = synthetic_config();
  auto data = TrainingData::load(manifest, cfg);
  if (data.train.size() != 20 || data.test.size() != 8) {
    return {false, "split is " + std::to_string(data.train.size()) + "/" + std::to_string(data.test.size())};
  }
  TrainOptions opts;
  opts.out_dir = dir.path() / "run";
  auto result = train(cfg, data, opts);

  std::size_t first_full_train = 0;
  double best_test = 0.0;
  for (const auto& e : result.epochs) {
    if (first_full_train == 0 && e.train_accuracy == 1.0) first_full_train = e.epoch;
    best_test = std::max(best_test, e.test_accuracy);
  }
  auto eval = evaluate_checkpoint(opts.out_dir / "checkpoint.caps", manifest, Split::kTest, cfg.data);

  bool average_nonincreasing = result.epochs.size() >= 20;
  std::vector<double> averages;
  for (std::size_t end = 20; end <= result.epochs.size(); ++end) {
    double s = 0.0;
    for (std::size_t k = end - 20; k < end; ++k) s += result.epochs[k].loss.total;
    averages.push_back(s / 20.0);
  }
  for (std::size_t k = 1; k < averages.size(); ++k) {
    if (averages[k] > averages[k - 1]) average_nonincreasing = false;
  }
  const bool pass = first_full_train != 0 && eval.accuracy >= 0.9 && average_nonincreasing;
  return {pass, std::to_string(result.epochs.size()) + " epochs, 100% train at epoch " +
                    std::to_string(first_full_train) + ", held-out accuracy of best checkpoint " +
                    fmt("%.3f", eval.accuracy) + ", 20-epoch loss average " +
                    (average_nonincreasing ? "nonincreasing" : "increases") + " (" + fmt("%.4f", averages.front()) +
                    " -> " + fmt("%.4f", averages.empty() ? 0.0 : averages.back()) + ")"};
}

Outcome ablation_structure() {
  TempDir dir("accept_ablate");
  auto manifest = synthetic_dataset(dir);
  RunConfig cfg = synthetic_config();
  auto rows = run_ablation(cfg, manifest, dir.path() / "out");
  std::istringstream csv(read_file(dir.path() / "out" / "ablation.csv"));
  std::string line;
  std::size_t data_rows = 0;
  std::getline(csv, line);
  while (std::getline(csv, line)) ++data_rows;
  bool pass = rows.size() == 4 && data_rows == 4;
  std::string detail;
  for (const auto& r : rows) {
    if (r.status != "ok" || !(r.accuracy > 0.5)) pass = false;
    detail += r.loss_config + "=" + fmt("%.3f", r.accuracy) + (r.status == "ok" ? "" : " (" + r.status + ")") + " ";
  }
  return {pass, detail + "(" + std::to_string(data_rows) + " csv rows, chance 0.5)"};
}

Outcome pipeline_counts() {
  TempDir dir("accept_pipeline");
  std::string detail;
  bool pass = true;

  FrameSequence seq{Tensor(Shape{16, 1, 8, 8}), 3, "s"};
  auto aug = augment_x8(seq);
  std::set<std::string> ids;
  for (const auto& s : aug) ids.insert(s.source_id);
  if (aug.size() != 8 || ids.size() != 8) pass = false;
  detail += "augment_x8 " + std::to_string(aug.size()) + "x; ";

  const std::vector<std::string> labels{"anger", "disgust", "fear", "happiness", "sadness", "surprise"};
  {
    std::ofstream m(dir.path() / "m.tsv");
    m << "#labels";
    for (const auto& l : labels) m << '\t' << l;
    m << '\n';
    for (std::size_t i = 0; i < 208; ++i) {
      const fs::path seq_dir = dir.path() / ("seq" + std::to_string(i));
      fs::create_directories(seq_dir);
      for (std::size_t t = 0; t < 16; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04zu.png", t);
        write_png(seq_dir / name, Raster{2, 2, 1, std::vector<std::uint8_t>(4, static_cast<std::uint8_t>(t))});
      }
      m << "seq" << i << '\t' << labels[i % labels.size()] << '\n';
    }
  }
  LoadOptions opt;
  opt.frame_size = 8;
  opt.data.test_fraction = 0.0;
  auto stream = load_dataset(dir.path() / "m.tsv", Split::kTrain, true, opt);
  std::size_t streamed = 0;
  while (stream.next()) ++streamed;
  if (streamed != 1664) pass = false;
  detail += "208 entries streamed " + std::to_string(streamed) + "; ";

  for (std::size_t length : {16u, 17u, 31u, 32u, 100u}) {
    std::vector<std::size_t> items(length);
    for (std::size_t i = 0; i < length; ++i) items[i] = i;
    auto picked = select_middle_frames(items, 16);
    const std::size_t start = (length - 16) / 2;
    bool ok = picked.size() == 16;
    for (std::size_t k = 0; ok && k < 16; ++k) ok = picked[k] == start + k;
    if (!ok) pass = false;
    detail += "L=" + std::to_string(length) + (ok ? " ok " : " MISMATCH ");
  }
  return {pass, detail};
}

Outcome determinism() {
  TempDir dir("accept_determinism");
  auto manifest = synthetic_dataset(dir);
  RunConfig cfg = synthetic_config();
  auto data = TrainingData::load(manifest, cfg);
  bool pass = true;
  std::string detail;

  RunConfig steps = cfg;
  steps.training.max_steps = 10;
  std::vector<std::string> checkpoints;
  for (std::size_t threads : {1u, 1u, 2u}) {
    TrainOptions opts;
    opts.out_dir = dir.path() / ("steps" + std::to_string(checkpoints.size()));
    opts.threads = threads;
    train(steps, data, opts);
    checkpoints.push_back(read_file(opts.out_dir / "last.caps"));
  }
  const bool same_steps = !checkpoints[0].empty() && checkpoints[0] == checkpoints[1] && checkpoints[0] == checkpoints[2];
  pass = pass && same_steps;
  detail += std::string("10-step checkpoints ") + (same_steps ? "identical" : "DIFFER") + " (threads 1,1,2); ";

  RunConfig two = cfg;
  two.training.epochs = 2;
  std::vector<std::string> metrics;
  for (int run = 0; run < 2; ++run) {
    TrainOptions opts;
    opts.out_dir = dir.path() / ("epochs" + std::to_string(run));
    train(two, data, opts);
    metrics.push_back(read_file(opts.out_dir / "metrics.csv"));
  }
  const bool same_metrics = !metrics[0].empty() && metrics[0] == metrics[1];
  pass = pass && same_metrics;
  detail += std::string("2-epoch metrics.csv ") + (same_metrics ? "identical" : "DIFFER") + "; ";

  const fs::path first = dir.path() / "epochs0" / "checkpoint.caps";
  auto model = load_checkpoint(first);
  auto eval1 = evaluate(model, data.test, data.labels);
  save_checkpoint(dir.path() / "resaved.caps", model);
  auto eval2 = evaluate(load_checkpoint(dir.path() / "resaved.caps"), data.test, data.labels);
  const bool same_eval = eval1.probabilities == eval2.probabilities && eval1.predictions == eval2.predictions &&
                         eval1.confusion == eval2.confusion &&
                         read_file(first) == read_file(dir.path() / "resaved.caps");
  pass = pass && same_eval;
  detail += std::string("checkpoint round-trip evaluation ") + (same_eval ? "identical" : "DIFFERS");
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"routing matches scripted oracle", routing_oracle},
      {"finite-difference gradient suite", gradient_suite},
      {"loss hand values", loss_hand_values},
      {"synthetic overfit", overfit_oracle},
      {"loss ablation", ablation_structure},
      {"pipeline counts", pipeline_counts},
      {"determinism", determinism},
  };
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-%zu]...\n", argv[0], criteria.size());
      return 2;
    }
    selected.push_back(static_cast<std::size_t>(n));
  }
  if (selected.empty()) {
    for (std::size_t n = 1; n <= criteria.size(); ++n) selected.push_back(n);
  }

  bool all = true;
  for (std::size_t n : selected) {
    const auto& [name, run] = criteria[n - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu %s: %s [%.1f s] %s\n", n, outcome.pass ? "PASS" : "FAIL", name.c_str(), seconds,
                outcome.detail.c_str());
    std::fflush(stdout);
    all = all && outcome.pass;
  }
  return all ? 0 : 1;
}
