#include "capsroute/model.hpp"

#include <algorithm>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

namespace {

ArchitectureConfig with_classes(ArchitectureConfig arch, std::size_t num_classes) {
  if (num_classes < 2) throw ConfigError("the model needs at least two classes");
  if (arch.num_classes != 0 && arch.num_classes != num_classes) {
    throw ConfigError("config num_classes = " + std::to_string(arch.num_classes) +
                      " but the dataset has " + std::to_string(num_classes) + " classes");
  }
  arch.num_classes = num_classes;
  arch.validate();
  return arch;
}

}  // namespace

CapsuleLstmModel::CapsuleLstmModel(const ArchitectureConfig& arch, std::size_t num_classes,
                                   std::uint64_t seed)
    : CapsuleLstmModel(with_classes(arch, num_classes), Rng(seed)) {}

CapsuleLstmModel::CapsuleLstmModel(const ArchitectureConfig& arch, Rng&& rng)
    : arch_(arch),
      encoder_(arch_, arch_.num_classes, rng),
      decoder_(arch_, rng),
      lstm_(LstmParams::init(arch_.num_classes, arch_.lstm_hidden, rng)) {
  auto append = [this](ParameterList ps) {
    for (auto& p : ps) parameters_.push_back(std::move(p));
  };
  append(encoder_.parameters());
  append(decoder_.parameters());
  append(lstm_.parameters());
}

Tensor frame_at(const Tensor& frames, std::size_t t) {
  if (frames.rank() != 4 || frames.dim(1) != 1) {
    throw DimensionError("expected frames [T,1,S,S], got " + shape_string(frames.shape()));
  }
  const std::size_t stride = frames.dim(2) * frames.dim(3);
  auto src = frames.data().subspan(t * stride, stride);
  return Tensor(Shape{1, frames.dim(2), frames.dim(3)}, std::vector<double>(src.begin(), src.end()));
}

SequenceForward CapsuleLstmModel::forward(GradientTape& tape, const Tensor& frames,
                                          std::optional<std::size_t> label, bool reconstruct) const {
  const std::size_t s = arch_.input_size;
  if (frames.rank() != 4 || frames.dim(1) != 1 || frames.dim(2) != s || frames.dim(3) != s) {
    throw DimensionError("model expects frames [T,1," + std::to_string(s) + "," +
                         std::to_string(s) + "], got " + shape_string(frames.shape()));
  }
  const std::size_t steps = frames.dim(0);
  SequenceForward out;
  std::vector<Tensor> probs;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor frame = frame_at(frames, t);
    Tensor caps = encoder_.forward(tape, frame);
    if (reconstruct) {
      out.reconstructions.push_back(decoder_.decode(tape, mask(tape, caps, label)));
    }
    probs.push_back(capsule_probabilities(tape, caps));
    out.capsules.push_back(std::move(caps));
  }
  out.frame_probabilities =
      ops::reshape(tape, ops::concat(tape, probs), Shape{steps, arch_.num_classes, 1});
  out.prediction = sequence_forward(tape, out.frame_probabilities, lstm_, arch_.sequence_length);
  return out;
}

JointLoss CapsuleLstmModel::sequence_loss(GradientTape& tape, const Tensor& frames,
                                          std::size_t label, const LossConfig& cfg) const {
  if (label >= arch_.num_classes) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(arch_.num_classes) + " classes");
  }
  SequenceForward fwd = forward(tape, frames, label, cfg.reconstruction);
  LossParts parts;
  auto frame_mean = [&](const std::vector<Tensor>& terms) {
    std::vector<Tensor> rows;
    rows.reserve(terms.size());
    for (const auto& t : terms) rows.push_back(ops::reshape(tape, t, Shape{1}));
    return ops::reshape(tape, ops::mean(tape, ops::concat(tape, rows)), Shape{});
  };
  if (cfg.margin) {
    std::vector<Tensor> terms;
    for (const auto& caps : fwd.capsules) terms.push_back(margin_loss(tape, caps, label));
    parts.margin = frame_mean(terms);
  }
  if (cfg.reconstruction) {
    std::vector<Tensor> terms;
    for (std::size_t t = 0; t < fwd.reconstructions.size(); ++t) {
      terms.push_back(reconstruction_loss(tape, frame_at(frames, t), fwd.reconstructions[t]));
    }
    parts.reconstruction = frame_mean(terms);
  }
  parts.lstm = cfg.lstm == LstmLossKind::kCrossEntropy
                   ? lstm_loss(tape, fwd.prediction, label)
                   : margin_loss_from_lengths(tape, fwd.prediction, label);
  return total_loss(tape, cfg, parts);
}

Tensor CapsuleLstmModel::predict(const Tensor& frames) const {
  GradientTape tape(false);
  return forward(tape, frames, std::nullopt, false).prediction;
}

}  // namespace capsroute
