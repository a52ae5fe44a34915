#include "capsroute/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

namespace {

void squash_row(const double* s, double* v, std::size_t d) {
  double sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) sq += s[k] * s[k];
  if (sq == 0.0) {
    std::fill(v, v + d, 0.0);
    return;
  }
  const double norm = std::sqrt(sq);
  const double factor = norm / (1.0 + sq);
  for (std::size_t k = 0; k < d; ++k) v[k] = factor * s[k];
}

// v = g(n) s with g(n) = n / (1 + n^2):
// ds = g(n) dv + (g'(n) / n) (s . dv) s, g'(n) = (1 - n^2) / (1 + n^2)^2.
void squash_row_backward(const double* s, const double* dv, double* ds, std::size_t d) {
  double sq = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    sq += s[k] * s[k];
    dot += s[k] * dv[k];
  }
  if (sq == 0.0) return;
  const double norm = std::sqrt(sq);
  const double denom = 1.0 + sq;
  const double g = norm / denom;
  const double radial = (1.0 - sq) / (denom * denom * norm) * dot;
  for (std::size_t k = 0; k < d; ++k) ds[k] += g * dv[k] + radial * s[k];
}

// [C*d_p, g, g] feature map -> [C*g*g, d_p] capsule rows, channel-major.
Tensor to_capsules(GradientTape& tape, const Tensor& maps, std::size_t capsule_dim) {
  const std::size_t channels = maps.dim(0) / capsule_dim;
  const std::size_t cells = maps.dim(1) * maps.dim(2);
  Tensor out(Shape{channels * cells, capsule_dim});
  auto src = maps.data();
  auto dst = out.data();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t d = 0; d < capsule_dim; ++d) {
      for (std::size_t pos = 0; pos < cells; ++pos) {
        dst[(ch * cells + pos) * capsule_dim + d] = src[(ch * capsule_dim + d) * cells + pos];
      }
    }
  }
  if (tape.needs_grad({&maps})) {
    tape.record(out, {maps}, [channels, cells, capsule_dim](const BackwardContext& ctx) {
      auto g = ctx.grad_in[0];
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t d = 0; d < capsule_dim; ++d) {
          for (std::size_t pos = 0; pos < cells; ++pos) {
            g[(ch * capsule_dim + d) * cells + pos] +=
                ctx.grad_out[(ch * cells + pos) * capsule_dim + d];
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor squash(GradientTape& tape, const Tensor& s) {
  if (s.rank() == 0) throw DimensionError("squash needs at least one axis");
  const std::size_t d = s.shape().back();
  const std::size_t rows = s.size() / d;
  Tensor out(s.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    squash_row(s.data().data() + r * d, out.data().data() + r * d, d);
  }
  if (tape.needs_grad({&s})) {
    tape.record(out, {s}, [s, rows, d](const BackwardContext& ctx) {
      for (std::size_t r = 0; r < rows; ++r) {
        squash_row_backward(s.data().data() + r * d, ctx.grad_out.data() + r * d,
                            ctx.grad_in[0].data() + r * d, d);
      }
    });
  }
  return out;
}

Tensor compute_votes(GradientTape& tape, const Tensor& u, const Tensor& weights) {
  if (u.rank() != 2 || weights.rank() != 4 || weights.dim(2) != u.dim(1) || weights.dim(0) == 0 ||
      u.dim(0) % weights.dim(0) != 0) {
    throw DimensionError("compute_votes: capsules " + shape_string(u.shape()) +
                         " incompatible with weights " + shape_string(weights.shape()));
  }
  const std::size_t p = u.dim(0), dp = u.dim(1);
  const std::size_t groups = weights.dim(0), n = weights.dim(1), d = weights.dim(3);
  const std::size_t per_group = p / groups;

  Tensor out(Shape{p, n, d});
  auto uv = u.data();
  auto wv = weights.data();
  auto votes = out.data();
  for (std::size_t i = 0; i < p; ++i) {
    const double* ui = uv.data() + i * dp;
    const double* wg = wv.data() + (i / per_group) * n * dp * d;
    for (std::size_t j = 0; j < n; ++j) {
      double* vote = votes.data() + (i * n + j) * d;
      const double* w = wg + j * dp * d;
      for (std::size_t a = 0; a < dp; ++a) {
        const double ua = ui[a];
        const double* wrow = w + a * d;
        for (std::size_t k = 0; k < d; ++k) vote[k] += ua * wrow[k];
      }
    }
  }

  if (tape.needs_grad({&u, &weights})) {
    tape.record(out, {u, weights}, [u, weights, p, dp, n, d, per_group](const BackwardContext& ctx) {
      auto uv = u.data();
      auto wv = weights.data();
      auto du = ctx.grad_in[0];
      auto dw = ctx.grad_in[1];
      for (std::size_t i = 0; i < p; ++i) {
        const std::size_t group = i / per_group;
        for (std::size_t j = 0; j < n; ++j) {
          const double* gv = ctx.grad_out.data() + (i * n + j) * d;
          const std::size_t block = (group * n + j) * dp * d;
          for (std::size_t a = 0; a < dp; ++a) {
            if (!dw.empty()) {
              const double ua = uv[i * dp + a];
              double* dwrow = dw.data() + block + a * d;
              for (std::size_t k = 0; k < d; ++k) dwrow[k] += ua * gv[k];
            }
            if (!du.empty()) {
              const double* wrow = wv.data() + block + a * d;
              double acc = 0.0;
              for (std::size_t k = 0; k < d; ++k) acc += wrow[k] * gv[k];
              du[i * dp + a] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor dynamic_routing(GradientTape& tape, const Tensor& votes, std::size_t iterations,
                       RoutingTrace* trace) {
  if (iterations < 1) throw ConfigError("dynamic routing needs at least one iteration");
  if (votes.rank() != 3) {
    throw DimensionError("dynamic_routing expects votes [P,N,D], got " + shape_string(votes.shape()));
  }
  const std::size_t p = votes.dim(0), n = votes.dim(1), d = votes.dim(2);
  auto u_hat = votes.data();

  std::vector<double> logits(p * n, 0.0);
  std::vector<double> couplings(p * n);
  std::vector<double> s(n * d);
  Tensor out(Shape{n, d});
  auto v = out.data();
  if (trace) trace->couplings.clear();

  for (std::size_t r = 0; r < iterations; ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      const double* b = logits.data() + i * n;
      double* c = couplings.data() + i * n;
      const double top = *std::max_element(b, b + n);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        c[j] = std::exp(b[j] - top);
        total += c[j];
      }
      for (std::size_t j = 0; j < n; ++j) c[j] /= total;
    }
    if (trace) trace->couplings.push_back(couplings);

    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double c = couplings[i * n + j];
        const double* vote = u_hat.data() + (i * n + j) * d;
        double* sj = s.data() + j * d;
        for (std::size_t k = 0; k < d; ++k) sj[k] += c * vote[k];
      }
    }
    for (std::size_t j = 0; j < n; ++j) squash_row(s.data() + j * d, v.data() + j * d, d);

    if (r + 1 == iterations) break;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* vote = u_hat.data() + (i * n + j) * d;
        const double* vj = v.data() + j * d;
        double agreement = 0.0;
        for (std::size_t k = 0; k < d; ++k) agreement += vj[k] * vote[k];
        logits[i * n + j] += agreement;
      }
    }
  }
  if (trace) trace->logits = logits;

  if (tape.needs_grad({&votes})) {
    tape.record(out, {votes}, [couplings = std::move(couplings), s = std::move(s), p, n,
                               d](const BackwardContext& ctx) {
      std::vector<double> ds(n * d, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        squash_row_backward(s.data() + j * d, ctx.grad_out.data() + j * d, ds.data() + j * d, d);
      }
      auto g = ctx.grad_in[0];
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double c = couplings[i * n + j];
          double* gv = g.data() + (i * n + j) * d;
          const double* dsj = ds.data() + j * d;
          for (std::size_t k = 0; k < d; ++k) gv[k] += c * dsj[k];
        }
      }
    });
  }
  return out;
}

Tensor capsule_probabilities(GradientTape& tape, const Tensor& capsules) {
  return ops::softmax(tape, ops::row_norms(tape, capsules));
}

CapsuleEncoder::CapsuleEncoder(const ArchitectureConfig& arch, std::size_t num_classes, Rng& rng)
    : arch_(arch), num_classes_(num_classes) {
  arch_.validate();
  if (num_classes_ < 1) throw ConfigError("encoder needs at least one class");
  constexpr std::size_t k = ArchitectureConfig::kKernel;
  std::size_t in_channels = 1;
  for (std::size_t out_channels : arch_.conv_channels) {
    Tensor w(Shape{out_channels, in_channels, k, k}, true);
    fill_uniform(w, std::sqrt(6.0 / static_cast<double>(in_channels * k * k)), rng);
    conv_weights_.push_back(w);
    conv_biases_.emplace_back(Shape{out_channels}, true);
    in_channels = out_channels;
  }
  const std::size_t primary_out = arch_.primary_capsule_channels * arch_.primary_capsule_dim;
  primary_weight_ = Tensor(Shape{primary_out, in_channels, k, k}, true);
  fill_uniform(primary_weight_, std::sqrt(3.0 / static_cast<double>(in_channels * k * k)), rng);
  primary_bias_ = Tensor(Shape{primary_out}, true);

  const std::size_t capsules = arch_.primary_capsule_count();
  const std::size_t groups = arch_.shared_routing_weights ? arch_.primary_capsule_channels : capsules;
  routing_weights_ = Tensor(
      Shape{groups, num_classes_, arch_.primary_capsule_dim, arch_.capsule_dim}, true);
  fill_normal(routing_weights_, 1.0 / std::sqrt(static_cast<double>(capsules)), rng);
}

Tensor CapsuleEncoder::primary_capsules(GradientTape& tape, const Tensor& frame) const {
  const std::size_t size = arch_.input_size;
  if (frame.shape() != Shape{1, size, size}) {
    throw DimensionError("encoder expects a [1," + std::to_string(size) + "," +
                         std::to_string(size) + "] frame, got " + shape_string(frame.shape()));
  }
  Tensor x = frame;
  for (std::size_t layer = 0; layer < conv_weights_.size(); ++layer) {
    const std::size_t stride = layer == 0 ? 1 : 2;
    x = ops::relu(tape, ops::conv2d(tape, x, conv_weights_[layer], conv_biases_[layer], stride));
  }
  x = ops::conv2d(tape, x, primary_weight_, primary_bias_, 2);
  return squash(tape, to_capsules(tape, x, arch_.primary_capsule_dim));
}

Tensor CapsuleEncoder::forward(GradientTape& tape, const Tensor& frame, RoutingTrace* trace) const {
  Tensor u = primary_capsules(tape, frame);
  Tensor votes = compute_votes(tape, u, routing_weights_);
  return dynamic_routing(tape, votes, arch_.routing_iterations, trace);
}

ParameterList CapsuleEncoder::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < conv_weights_.size(); ++i) {
    out.push_back({"encoder.conv" + std::to_string(i) + ".weight", conv_weights_[i]});
    out.push_back({"encoder.conv" + std::to_string(i) + ".bias", conv_biases_[i]});
  }
  out.push_back({"encoder.primary.weight", primary_weight_});
  out.push_back({"encoder.primary.bias", primary_bias_});
  out.push_back({"encoder.routing.weight", routing_weights_});
  return out;
}

}  // namespace capsroute
