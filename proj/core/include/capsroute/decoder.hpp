#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/parameters.hpp"
#include "capsroute/random.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// One row of a capsule matrix, selected for reconstruction.
struct MaskedCapsule {
  Tensor vector;
  std::size_t class_index = 0;
};

/// Selects the row at `label` when given (training), otherwise the row with
/// the largest norm (ties -> lowest index). Gradients reach only that row.
MaskedCapsule mask(GradientTape& tape, const Tensor& capsules,
                   std::optional<std::size_t> label = std::nullopt);

/// Reconstructs a [1,S,S] frame with pixels in (0,1) from a masked capsule.
///
/// `fc`: capsule_dim -> hidden... (relu) -> S*S sigmoid.
/// `deconv`: capsule_dim -> 128*(S/8)^2 (relu), then three stride-2 3x3
/// transposed convs 128->64->32->1, each doubling the side length.
class CapsuleDecoder {
 public:
  CapsuleDecoder(const ArchitectureConfig& arch, Rng& rng);

  Tensor decode(GradientTape& tape, const MaskedCapsule& capsule) const;
  ParameterList parameters() const;

 private:
  Tensor decode_fc(GradientTape& tape, const Tensor& x) const;
  Tensor decode_deconv(GradientTape& tape, const Tensor& x) const;

  ArchitectureConfig arch_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::vector<Tensor> deconv_kernels_;
  std::vector<Tensor> deconv_biases_;
};

}  // namespace capsroute
