#pragma once

#include <cstddef>

#include "capsroute/parameters.hpp"
#include "capsroute/random.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// Single-layer LSTM with a linear+softmax classifier on the final hidden
/// state. Gate rows are stacked in the order input, forget, output,
/// candidate: each block is `hidden` rows of the 4H-row matrices.
struct LstmParams {
  Tensor input_weights;      // [4H, N]
  Tensor hidden_weights;     // [4H, H]
  Tensor bias;               // [4H]
  Tensor classifier_weights; // [N, H]
  Tensor classifier_bias;    // [N]

  /// Weights uniform in +-1/sqrt(H); forget-gate bias 1, other biases 0.
  static LstmParams init(std::size_t inputs, std::size_t hidden, Rng& rng);
  /// All-zero parameters (useful for hand-checked cases).
  static LstmParams zeros(std::size_t inputs, std::size_t hidden);

  std::size_t inputs() const { return input_weights.dim(1); }
  std::size_t hidden() const { return hidden_weights.dim(1); }
  ParameterList parameters() const;
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden);
};

LstmState lstm_step(GradientTape& tape, const Tensor& x, const LstmState& state, const LstmParams& p);

/// seq [T,N,1] (or [T,N]) -> class distribution [N]. Starts from a zero
/// state and requires T == expected_length.
Tensor sequence_forward(GradientTape& tape, const Tensor& seq, const LstmParams& p,
                        std::size_t expected_length);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t classify(const Tensor& probs);

}  // namespace capsroute
