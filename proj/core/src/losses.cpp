#include "capsroute/losses.hpp"

#include <algorithm>
#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

LossConfig LossConfig::from_name(std::string_view name) {
  LossConfig cfg;
  cfg.name = std::string(name);
  if (name == "mm") {
    cfg.reconstruction = false;
    cfg.lstm = LstmLossKind::kMargin;
  } else if (name == "mrm") {
    cfg.lstm = LstmLossKind::kMargin;
  } else if (name == "mrc") {
  } else if (name == "mc") {
    cfg.reconstruction = false;
  } else {
    throw ConfigError("unknown loss_config '" + std::string(name) + "' (expected mm, mrm, mrc or mc)");
  }
  return cfg;
}

std::string LossConfig::description() const {
  std::string out = margin ? "margin_loss (Capsule)" : "";
  if (reconstruction) out += (out.empty() ? "" : " + ") + std::string("reconstruction_loss (Capsule)");
  out += (out.empty() ? "" : " + ");
  out += lstm == LstmLossKind::kCrossEntropy ? "Cross Entropy (LSTM)" : "margin_loss (LSTM)";
  return out;
}

void LossConfig::validate() const {
  if (!margin && !reconstruction) {
    throw ConfigError("loss config '" + name + "' enables no encoder loss");
  }
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& other) {
  margin += other.margin;
  reconstruction += other.reconstruction;
  lstm_ce += other.lstm_ce;
  total += other.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double factor) const {
  return {margin * factor, reconstruction * factor, lstm_ce * factor, total * factor};
}

namespace {

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw LabelError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(classes) + " classes");
  }
}

}  // namespace

Tensor margin_loss_from_lengths(GradientTape& tape, const Tensor& lengths, std::size_t label) {
  if (lengths.rank() != 1) {
    throw DimensionError("margin loss expects a 1-D length vector, got " +
                         shape_string(lengths.shape()));
  }
  const std::size_t n = lengths.size();
  check_label(label, n);
  auto v = lengths.data();
  double total = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (c == label) {
      const double h = std::max(0.0, kMarginUpper - v[c]);
      total += h * h;
    } else {
      const double h = std::max(0.0, v[c] - kMarginLower);
      total += kMarginAbsentWeight * h * h;
    }
  }
  Tensor out = Tensor::scalar(total);
  if (tape.needs_grad({&lengths})) {
    tape.record(out, {lengths}, [lengths, label](const BackwardContext& ctx) {
      auto v = lengths.data();
      auto g = ctx.grad_in[0];
      const double up = ctx.grad_out[0];
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (c == label) {
          g[c] -= up * 2.0 * std::max(0.0, kMarginUpper - v[c]);
        } else {
          g[c] += up * 2.0 * kMarginAbsentWeight * std::max(0.0, v[c] - kMarginLower);
        }
      }
    });
  }
  return out;
}

Tensor margin_loss(GradientTape& tape, const Tensor& capsules, std::size_t label) {
  if (capsules.rank() != 2) {
    throw DimensionError("margin loss expects a [N,D] capsule matrix, got " +
                         shape_string(capsules.shape()));
  }
  check_label(label, capsules.dim(0));
  return margin_loss_from_lengths(tape, ops::row_norms(tape, capsules), label);
}

Tensor reconstruction_loss(GradientTape& tape, const Tensor& original, const Tensor& reconstructed) {
  if (original.shape() != reconstructed.shape()) {
    throw DimensionError("reconstruction loss: original " + shape_string(original.shape()) +
                         " vs reconstruction " + shape_string(reconstructed.shape()));
  }
  auto r = original.data();
  auto a = reconstructed.data();
  const double n = static_cast<double>(r.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - a[i];
    sq += d * d;
  }
  Tensor out = Tensor::scalar(kReconstructionWeight * sq / n);
  if (tape.needs_grad({&original, &reconstructed})) {
    tape.record(out, {original, reconstructed}, [original, reconstructed, n](const BackwardContext& ctx) {
      auto r = original.data();
      auto a = reconstructed.data();
      const double f = ctx.grad_out[0] * kReconstructionWeight * 2.0 / n;
      auto gr = ctx.grad_in[0], ga = ctx.grad_in[1];
      for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += f * (r[i] - a[i]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += f * (a[i] - r[i]);
    });
  }
  return out;
}

Tensor lstm_loss(GradientTape& tape, const Tensor& prediction, std::size_t label) {
  if (prediction.rank() != 1) {
    throw DimensionError("lstm loss expects a 1-D distribution, got " +
                         shape_string(prediction.shape()));
  }
  check_label(label, prediction.size());
  auto p = ops::slice(tape, prediction, label, 1);
  auto logp = ops::log(tape, p, kLogFloor);
  return ops::reshape(tape, ops::scale(tape, logp, -kLstmLossWeight), Shape{});
}

JointLoss total_loss(GradientTape& tape, const LossConfig& cfg, const LossParts& parts) {
  JointLoss out;
  std::vector<Tensor> terms;
  auto take = [&](bool enabled, const Tensor& t, double& slot, const char* what) {
    if (!enabled) return;
    if (!t.defined()) {
      throw ContractError(std::string("loss config '") + cfg.name + "' needs the " + what +
                          " component");
    }
    slot = t.item();
    terms.push_back(t);
  };
  take(cfg.margin, parts.margin, out.breakdown.margin, "margin");
  take(cfg.reconstruction, parts.reconstruction, out.breakdown.reconstruction, "reconstruction");
  take(true, parts.lstm, out.breakdown.lstm_ce, "lstm");

  out.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = ops::add(tape, out.total, terms[i]);
  out.breakdown.total = out.total.item();
  return out;
}

}  // namespace capsroute
