#include "capsroute/lstm.hpp"

#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

LstmParams LstmParams::init(std::size_t inputs, std::size_t hidden, Rng& rng) {
  LstmParams p = zeros(inputs, hidden);
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.input_weights, limit, rng);
  fill_uniform(p.hidden_weights, limit, rng);
  fill_uniform(p.classifier_weights, limit, rng);
  auto b = p.bias.data();
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
  return p;
}

LstmParams LstmParams::zeros(std::size_t inputs, std::size_t hidden) {
  if (inputs == 0 || hidden == 0) throw ConfigError("LSTM sizes must be positive");
  LstmParams p;
  p.input_weights = Tensor(Shape{4 * hidden, inputs}, true);
  p.hidden_weights = Tensor(Shape{4 * hidden, hidden}, true);
  p.bias = Tensor(Shape{4 * hidden}, true);
  p.classifier_weights = Tensor(Shape{inputs, hidden}, true);
  p.classifier_bias = Tensor(Shape{inputs}, true);
  return p;
}

ParameterList LstmParams::parameters() const {
  return {{"lstm.input_weights", input_weights},
          {"lstm.hidden_weights", hidden_weights},
          {"lstm.bias", bias},
          {"lstm.classifier.weight", classifier_weights},
          {"lstm.classifier.bias", classifier_bias}};
}

LstmState LstmState::zeros(std::size_t hidden) {
  return {Tensor(Shape{hidden}), Tensor(Shape{hidden})};
}

LstmState lstm_step(GradientTape& tape, const Tensor& x, const LstmState& state, const LstmParams& p) {
  const std::size_t h = p.hidden();
  if (x.shape() != Shape{p.inputs()} || state.h.shape() != Shape{h} || state.c.shape() != Shape{h}) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + ", state " +
                         shape_string(state.h.shape()) + "/" + shape_string(state.c.shape()) +
                         " do not match parameters [4H=" + std::to_string(4 * h) +
                         ", N=" + std::to_string(p.inputs()) + "]");
  }
  Tensor recurrent = ops::matmul(tape, p.hidden_weights, ops::reshape(tape, state.h, Shape{h, 1}));
  Tensor pre = ops::add(tape, ops::linear(tape, p.input_weights, x, p.bias),
                        ops::reshape(tape, recurrent, Shape{4 * h}));
  Tensor gates = ops::reshape(tape, pre, Shape{4, h});
  Tensor in_gate = ops::sigmoid(tape, ops::reshape(tape, ops::slice(tape, gates, 0, 1), Shape{h}));
  Tensor forget = ops::sigmoid(tape, ops::reshape(tape, ops::slice(tape, gates, 1, 1), Shape{h}));
  Tensor out_gate = ops::sigmoid(tape, ops::reshape(tape, ops::slice(tape, gates, 2, 1), Shape{h}));
  Tensor cand = ops::tanh(tape, ops::reshape(tape, ops::slice(tape, gates, 3, 1), Shape{h}));

  Tensor c = ops::add(tape, ops::mul(tape, forget, state.c), ops::mul(tape, in_gate, cand));
  Tensor hidden = ops::mul(tape, out_gate, ops::tanh(tape, c));
  return {hidden, c};
}

Tensor sequence_forward(GradientTape& tape, const Tensor& seq, const LstmParams& p,
                        std::size_t expected_length) {
  const std::size_t n = p.inputs();
  const bool shape_ok = (seq.rank() == 3 && seq.dim(1) == n && seq.dim(2) == 1) ||
                        (seq.rank() == 2 && seq.dim(1) == n);
  if (!shape_ok) {
    throw DimensionError("sequence_forward expects [T," + std::to_string(n) + ",1], got " +
                         shape_string(seq.shape()));
  }
  if (seq.dim(0) != expected_length) {
    throw DimensionError("sequence_forward expects " + std::to_string(expected_length) +
                         " time steps, got " + std::to_string(seq.dim(0)));
  }
  Tensor flat = ops::reshape(tape, seq, Shape{seq.dim(0), n});
  LstmState state = LstmState::zeros(p.hidden());
  for (std::size_t t = 0; t < seq.dim(0); ++t) {
    Tensor x = ops::reshape(tape, ops::slice(tape, flat, t, 1), Shape{n});
    state = lstm_step(tape, x, state, p);
  }
  return ops::softmax(tape, ops::linear(tape, p.classifier_weights, state.h, p.classifier_bias));
}

std::size_t classify(const Tensor& probs) {
  auto v = probs.data();
  if (v.empty()) throw DimensionError("classify on empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace capsroute
