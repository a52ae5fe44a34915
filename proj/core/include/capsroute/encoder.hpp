#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/parameters.hpp"
#include "capsroute/random.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// v = (|s|^2 / (1 + |s|^2)) * s / |s|, applied to every row (last axis).
/// Zero rows map to zero with zero gradient.
Tensor squash(GradientTape& tape, const Tensor& s);

/// Prediction vectors u_hat[i,j] = u[i] * W[g(i),j] for primary capsules
/// u [P,d_p] and weights [G,N,d_p,D].
///
/// G == P gives one weight block per capsule. A smaller G must divide P;
/// capsule i then uses block i / (P/G), so consecutive runs of P/G capsules
/// (one capsule channel's spatial positions) share a block.
Tensor compute_votes(GradientTape& tape, const Tensor& u, const Tensor& weights);

/// Couplings and logits observed while routing; filled on request.
struct RoutingTrace {
  /// couplings[r] is the [P*N] row-major coupling matrix used in iteration r.
  std::vector<std::vector<double>> couplings;
  /// Logits after the last agreement update, [P*N].
  std::vector<double> logits;
};

/// Routing-by-agreement from votes [P,N,D] to output capsules [N,D].
///
/// Each iteration: c_i = softmax_j(b_i); s_j = sum_i c_ij u_hat[i,j];
/// v_j = squash(s_j); then b_ij += v_j . u_hat[i,j] unless it was the last
/// iteration. b starts at zero. Couplings are treated as constants in the
/// backward pass, so the gradient flows only through the final weighted sum.
Tensor dynamic_routing(GradientTape& tape, const Tensor& votes, std::size_t iterations,
                       RoutingTrace* trace = nullptr);

/// Row norms of a capsule matrix [N,D] passed through a softmax -> [N].
Tensor capsule_probabilities(GradientTape& tape, const Tensor& capsules);

/// Convolutional stack + primary capsules + routing to N class capsules.
class CapsuleEncoder {
 public:
  CapsuleEncoder(const ArchitectureConfig& arch, std::size_t num_classes, Rng& rng);

  /// frame [1,S,S] -> capsule matrix [N, capsule_dim]
  Tensor forward(GradientTape& tape, const Tensor& frame, RoutingTrace* trace = nullptr) const;

  /// frame [1,S,S] -> squashed primary capsules [P, primary_capsule_dim]
  Tensor primary_capsules(GradientTape& tape, const Tensor& frame) const;

  std::size_t num_classes() const { return num_classes_; }
  ParameterList parameters() const;

 private:
  ArchitectureConfig arch_;
  std::size_t num_classes_;
  std::vector<Tensor> conv_weights_;
  std::vector<Tensor> conv_biases_;
  Tensor primary_weight_;
  Tensor primary_bias_;
  Tensor routing_weights_;
};

}  // namespace capsroute
