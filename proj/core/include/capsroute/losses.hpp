#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "capsroute/tensor.hpp"

namespace capsroute {

inline constexpr double kMarginUpper = 0.9;
inline constexpr double kMarginLower = 0.1;
inline constexpr double kMarginAbsentWeight = 0.5;
inline constexpr double kReconstructionWeight = 0.0005;
inline constexpr double kLstmLossWeight = 0.5;
inline constexpr double kLogFloor = 1e-12;

enum class LstmLossKind { kCrossEntropy, kMargin };

/// Which loss terms are active. The four named combinations are:
///   mm  - capsule margin + LSTM margin
///   mrm - capsule margin + reconstruction + LSTM margin
///   mrc - capsule margin + reconstruction + LSTM cross-entropy (full joint loss)
///   mc  - capsule margin + LSTM cross-entropy
struct LossConfig {
  std::string name = "mrc";
  bool margin = true;
  bool reconstruction = true;
  LstmLossKind lstm = LstmLossKind::kCrossEntropy;

  static LossConfig from_name(std::string_view name);
  static constexpr std::array<std::string_view, 4> kNames{"mm", "mrm", "mrc", "mc"};

  std::string description() const;
  void validate() const;
};

/// Per-component loss values. `lstm_ce` carries whichever LSTM loss the
/// config selects.
struct LossBreakdown {
  double margin = 0.0;
  double reconstruction = 0.0;
  double lstm_ce = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown scaled(double factor) const;
};

/// Margin loss summed over classes, applied to the row norms of a [N,D]
/// capsule matrix.
Tensor margin_loss(GradientTape& tape, const Tensor& capsules, std::size_t label);

/// Margin loss over a vector of lengths (or probabilities) in [N].
Tensor margin_loss_from_lengths(GradientTape& tape, const Tensor& lengths, std::size_t label);

/// kReconstructionWeight * mean squared pixel error.
Tensor reconstruction_loss(GradientTape& tape, const Tensor& original, const Tensor& reconstructed);

/// kLstmLossWeight * cross-entropy of a predicted distribution against a
/// one-hot label, with the log clamped at kLogFloor.
Tensor lstm_loss(GradientTape& tape, const Tensor& prediction, std::size_t label);

/// Scalar loss tensors; undefined for disabled components.
struct LossParts {
  Tensor margin;
  Tensor reconstruction;
  Tensor lstm;
};

struct JointLoss {
  Tensor total;
  LossBreakdown breakdown;
};

/// Unweighted sum of the components enabled by cfg. Scaling constants are
/// already inside the individual terms.
JointLoss total_loss(GradientTape& tape, const LossConfig& cfg, const LossParts& parts);

}  // namespace capsroute
