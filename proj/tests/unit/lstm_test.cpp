#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "capsroute/adam.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/lstm.hpp"
#include "capsroute/ops.hpp"
#include "test_support.hpp"

using namespace capsroute;
using capsroute::testing::check_gradients;
using capsroute::testing::random_tensor;

TEST(LstmStep, ZeroParametersGiveZeroHidden) {
  LstmParams p = LstmParams::zeros(3, 4);
  GradientTape tape(false);
  LstmState s = lstm_step(tape, Tensor::from({0.3, -2.0, 5.0}), LstmState::zeros(4), p);
  for (double v : s.h.data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, SaturatedGatesHandCase) {
  // H=1, weights zero, biases (i,f,o,g) = (large, -large, large, 0)
  LstmParams p = LstmParams::zeros(1, 1);
  auto b = p.bias.data();
  b[0] = 50;
  b[1] = -50;
  b[2] = 50;
  b[3] = 0;
  GradientTape tape(false);
  LstmState start{Tensor::from({0.7}), Tensor::from({0.9})};
  LstmState s = lstm_step(tape, Tensor::from({0.4}), start, p);
  EXPECT_NEAR(s.c[0], 0.0, 1e-12);
  EXPECT_NEAR(s.h[0], 0.0, 1e-12);
}

TEST(LstmStep, ShapeMismatch) {
  LstmParams p = LstmParams::zeros(3, 4);
  GradientTape tape(false);
  EXPECT_THROW(lstm_step(tape, Tensor::from({1, 2}), LstmState::zeros(4), p), DimensionError);
  EXPECT_THROW(lstm_step(tape, Tensor::from({1, 2, 3}), LstmState::zeros(2), p), DimensionError);
}

TEST(LstmInit, ForgetBiasOneAndWeightRange) {
  Rng rng(1);
  LstmParams p = LstmParams::init(6, 16, rng);
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(p.bias[k], (k >= 16 && k < 32) ? 1.0 : 0.0);
  for (double w : p.hidden_weights.data()) EXPECT_LE(std::abs(w), 0.25);
  for (double w : p.input_weights.data()) EXPECT_LE(std::abs(w), 0.25);
}

TEST(Bptt, FourStepsMatchFiniteDifferences) {
  Rng rng(2);
  LstmParams p = LstmParams::init(2, 3, rng);
  std::mt19937_64 gen(3);
  Tensor seq = random_tensor({4, 2, 1}, gen, 0, 1);
  std::vector<std::pair<std::string, Tensor>> leaves{{"seq", seq}};
  for (const auto& param : p.parameters()) leaves.emplace_back(param.name, param.value);
  auto res = check_gradients([&](GradientTape& t) { return lstm_loss(t, sequence_forward(t, seq, p, 4), 1); },
                             leaves);
  EXPECT_LT(res.max_error, 1e-3) << res.worst;
}

TEST(SequenceForward, DistributionAndDeterminism) {
  Rng rng(4);
  LstmParams p = LstmParams::init(5, 8, rng);
  std::mt19937_64 gen(5);
  Tensor seq = random_tensor({16, 5, 1}, gen, 0, 1, false);
  GradientTape tape(false);
  Tensor a = sequence_forward(tape, seq, p, 16);
  Tensor b = sequence_forward(tape, seq.clone(), p, 16);
  ASSERT_EQ(a.shape(), (Shape{5}));
  double total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GE(a[i], 0.0);
    total += a[i];
    EXPECT_EQ(a[i], b[i]);
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(SequenceForward, WrongLength) {
  LstmParams p = LstmParams::zeros(2, 3);
  GradientTape tape(false);
  EXPECT_THROW(sequence_forward(tape, Tensor(Shape{15, 2, 1}), p, 16), DimensionError);
  EXPECT_THROW(sequence_forward(tape, Tensor(Shape{16, 3, 1}), p, 16), DimensionError);
}

TEST(SequenceForward, GradientStaysFiniteOverSixteenSteps) {
  std::mt19937_64 gen(6);
  for (int draw = 0; draw < 1000; ++draw) {
    Rng rng(static_cast<std::uint64_t>(draw));
    LstmParams p = LstmParams::init(6, 128, rng);
    Tensor seq = random_tensor({16, 6, 1}, gen, 0, 1);
    GradientTape tape;
    Gradients g = tape.backward(lstm_loss(tape, sequence_forward(tape, seq, p, 16), draw % 6));
    for (const auto& param : p.parameters()) {
      for (double v : g.of(param.value)) ASSERT_TRUE(std::isfinite(v)) << param.name;
    }
  }
}

TEST(Classify, ArgmaxAndTies) {
  EXPECT_EQ(classify(Tensor::from({0.1, 0.7, 0.2})), 1u);
  EXPECT_EQ(classify(Tensor::from({0.5, 0.5})), 0u);
  for (std::size_t k = 0; k < 4; ++k) {
    Tensor onehot(Shape{4});
    onehot.data()[k] = 1.0;
    EXPECT_EQ(classify(onehot), k);
  }
}

TEST(Classify, UpstreamShiftDoesNotChangePrediction) {
  // adding a constant to every capsule norm leaves the softmaxed frame
  // probabilities, and therefore the prediction, unchanged
  Rng rng(7);
  LstmParams p = LstmParams::init(3, 8, rng);
  std::mt19937_64 gen(8);
  Tensor norms = random_tensor({16, 3}, gen, 0, 1, false);
  auto predict = [&](double shift) {
    GradientTape tape(false);
    std::vector<Tensor> rows;
    for (std::size_t t = 0; t < 16; ++t) {
      Tensor row(Shape{3});
      for (std::size_t j = 0; j < 3; ++j) row.data()[j] = norms[t * 3 + j] + shift;
      rows.push_back(ops::softmax(tape, row));
    }
    return classify(sequence_forward(tape, ops::reshape(tape, ops::concat(tape, rows), Shape{16, 3, 1}), p, 16));
  };
  EXPECT_EQ(predict(0.0), predict(0.37));
  EXPECT_EQ(predict(0.0), predict(-2.5));
}

// Class 0 probabilities drift upward over time, class 1 downward.
TEST(SequenceForward, OverfitsDriftingSequences) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> noise(0.0, 0.03);
  std::vector<Tensor> seqs;
  std::vector<std::size_t> labels;
  for (std::size_t n = 0; n < 64; ++n) {
    const std::size_t label = n % 2;
    const double slope = label == 0 ? 0.02 : -0.02;
    Tensor seq(Shape{16, 2, 1});
    for (std::size_t t = 0; t < 16; ++t) {
      const double p0 = std::clamp(0.5 + slope * (static_cast<double>(t) - 7.5) + noise(gen), 0.01, 0.99);
      seq.data()[t * 2] = p0;
      seq.data()[t * 2 + 1] = 1 - p0;
    }
    seqs.push_back(seq);
    labels.push_back(label);
  }

  Rng rng(10);
  LstmParams p = LstmParams::init(2, 8, rng);
  ParameterList params = p.parameters();
  AdamState state = AdamState::for_parameters(params);
  AdamHyperParams hp;
  hp.learning_rate = 1e-2;
  auto accuracy = [&] {
    std::size_t correct = 0;
    for (std::size_t n = 0; n < seqs.size(); ++n) {
      GradientTape tape(false);
      correct += classify(sequence_forward(tape, seqs[n], p, 16)) == labels[n];
    }
    return static_cast<double>(correct) / static_cast<double>(seqs.size());
  };
  int step = 0;
  for (; step < 500 && accuracy() < 1.0; ++step) {
    for (auto& param : params) param.value.zero_grad();
    for (std::size_t n = 0; n < seqs.size(); ++n) {
      GradientTape tape;
      Gradients g = tape.backward(lstm_loss(tape, sequence_forward(tape, seqs[n], p, 16), labels[n]));
      for (auto& param : params) g.accumulate_into(param.value, 1.0 / 64);
    }
    adam_step(params, state, hp);
  }
  EXPECT_EQ(accuracy(), 1.0) << "after " << step << " steps";
}
