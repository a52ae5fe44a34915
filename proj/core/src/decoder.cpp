#include "capsroute/decoder.hpp"

#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

namespace {

constexpr std::size_t kDeconvChannels[] = {128, 64, 32, 1};

Tensor dense(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape), true);
  fill_uniform(t, limit, rng);
  return t;
}

}  // namespace

MaskedCapsule mask(GradientTape& tape, const Tensor& capsules, std::optional<std::size_t> label) {
  if (capsules.rank() != 2) {
    throw DimensionError("mask expects a [N,D] capsule matrix, got " + shape_string(capsules.shape()));
  }
  const std::size_t n = capsules.dim(0), d = capsules.dim(1);
  std::size_t row = 0;
  if (label) {
    if (*label >= n) {
      throw LabelError("label " + std::to_string(*label) + " out of range for " + std::to_string(n) +
                       " classes");
    }
    row = *label;
  } else {
    auto v = capsules.data();
    double best = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += v[j * d + k] * v[j * d + k];
      if (sq > best) {
        best = sq;
        row = j;
      }
    }
  }
  auto selected = ops::reshape(tape, ops::slice(tape, capsules, row, 1), Shape{d});
  return {selected, row};
}

CapsuleDecoder::CapsuleDecoder(const ArchitectureConfig& arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  const std::size_t pixels = arch_.input_size * arch_.input_size;
  if (arch_.decoder == DecoderKind::kFullyConnected) {
    std::size_t in = arch_.capsule_dim;
    for (std::size_t hidden : arch_.decoder_hidden_sizes) {
      weights_.push_back(dense(Shape{hidden, in}, std::sqrt(6.0 / static_cast<double>(in)), rng));
      biases_.emplace_back(Shape{hidden}, true);
      in = hidden;
    }
    weights_.push_back(
        dense(Shape{pixels, in}, std::sqrt(6.0 / static_cast<double>(in + pixels)), rng));
    biases_.emplace_back(Shape{pixels}, true);
  } else {
    const std::size_t side = arch_.input_size / 8;
    const std::size_t seed_units = kDeconvChannels[0] * side * side;
    weights_.push_back(dense(Shape{seed_units, arch_.capsule_dim},
                             std::sqrt(6.0 / static_cast<double>(arch_.capsule_dim)), rng));
    biases_.emplace_back(Shape{seed_units}, true);
    constexpr std::size_t k = ArchitectureConfig::kKernel;
    for (std::size_t layer = 0; layer < 3; ++layer) {
      const std::size_t c_in = kDeconvChannels[layer], c_out = kDeconvChannels[layer + 1];
      deconv_kernels_.push_back(
          dense(Shape{c_in, c_out, k, k}, std::sqrt(6.0 / static_cast<double>(c_in * k * k)), rng));
      deconv_biases_.emplace_back(Shape{c_out}, true);
    }
  }
}

Tensor CapsuleDecoder::decode(GradientTape& tape, const MaskedCapsule& capsule) const {
  if (capsule.vector.shape() != Shape{arch_.capsule_dim}) {
    throw DimensionError("decoder expects a [" + std::to_string(arch_.capsule_dim) +
                         "] capsule, got " + shape_string(capsule.vector.shape()));
  }
  return arch_.decoder == DecoderKind::kFullyConnected ? decode_fc(tape, capsule.vector)
                                                       : decode_deconv(tape, capsule.vector);
}

Tensor CapsuleDecoder::decode_fc(GradientTape& tape, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t layer = 0; layer + 1 < weights_.size(); ++layer) {
    h = ops::relu(tape, ops::linear(tape, weights_[layer], h, biases_[layer]));
  }
  h = ops::sigmoid(tape, ops::linear(tape, weights_.back(), h, biases_.back()));
  return ops::reshape(tape, h, Shape{1, arch_.input_size, arch_.input_size});
}

Tensor CapsuleDecoder::decode_deconv(GradientTape& tape, const Tensor& x) const {
  std::size_t side = arch_.input_size / 8;
  Tensor h = ops::relu(tape, ops::linear(tape, weights_[0], x, biases_[0]));
  h = ops::reshape(tape, h, Shape{kDeconvChannels[0], side, side});
  for (std::size_t layer = 0; layer < 3; ++layer) {
    // Full output is 2*side+1; dropping the first row/column leaves 2*side.
    h = ops::conv_transpose2d(tape, h, deconv_kernels_[layer], deconv_biases_[layer], 2);
    side *= 2;
    h = ops::crop2d(tape, h, 1, 1, side, side);
    h = layer < 2 ? ops::relu(tape, h) : ops::sigmoid(tape, h);
  }
  return h;
}

ParameterList CapsuleDecoder::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({"decoder.fc" + std::to_string(i) + ".weight", weights_[i]});
    out.push_back({"decoder.fc" + std::to_string(i) + ".bias", biases_[i]});
  }
  for (std::size_t i = 0; i < deconv_kernels_.size(); ++i) {
    out.push_back({"decoder.deconv" + std::to_string(i) + ".weight", deconv_kernels_[i]});
    out.push_back({"decoder.deconv" + std::to_string(i) + ".bias", deconv_biases_[i]});
  }
  return out;
}

}  // namespace capsroute
