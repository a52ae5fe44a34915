#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/decoder.hpp"
#include "capsroute/encoder.hpp"
#include "capsroute/losses.hpp"
#include "capsroute/lstm.hpp"
#include "capsroute/parameters.hpp"

namespace capsroute {

struct SequenceForward {
  std::vector<Tensor> capsules;         // per frame, [N, capsule_dim]
  std::vector<Tensor> reconstructions;  // per frame, [1,S,S]; empty unless requested
  Tensor frame_probabilities;           // [T,N,1]
  Tensor prediction;                    // [N]
};

/// Capsule encoder per frame, reconstruction decoder, and an LSTM over the
/// per-frame capsule probabilities.
class CapsuleLstmModel {
 public:
  CapsuleLstmModel(const ArchitectureConfig& arch, std::size_t num_classes, std::uint64_t seed);

  const ArchitectureConfig& arch() const { return arch_; }
  std::size_t num_classes() const { return arch_.num_classes; }

  /// Stable, named parameter order; shared with checkpoints and Adam.
  const ParameterList& parameters() const { return parameters_; }

  /// frames [T,1,S,S]. When reconstructing, the decoder input is the row at
  /// `label` if given, else the longest capsule.
  SequenceForward forward(GradientTape& tape, const Tensor& frames,
                          std::optional<std::size_t> label, bool reconstruct) const;

  /// Per-sequence joint loss. Margin and reconstruction terms are averaged
  /// over the frames of the sequence.
  JointLoss sequence_loss(GradientTape& tape, const Tensor& frames, std::size_t label,
                          const LossConfig& cfg) const;

  /// Class distribution [N] without recording gradients.
  Tensor predict(const Tensor& frames) const;

  const CapsuleEncoder& encoder() const { return encoder_; }
  const CapsuleDecoder& decoder() const { return decoder_; }
  const LstmParams& lstm() const { return lstm_; }

 private:
  CapsuleLstmModel(const ArchitectureConfig& arch, Rng&& init_rng);

  ArchitectureConfig arch_;
  CapsuleEncoder encoder_;
  CapsuleDecoder decoder_;
  LstmParams lstm_;
  ParameterList parameters_;
};

/// Frame t of a [T,1,S,S] tensor as an independent [1,S,S] tensor.
Tensor frame_at(const Tensor& frames, std::size_t t);

}  // namespace capsroute
