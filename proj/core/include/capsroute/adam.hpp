#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/parameters.hpp"

namespace capsroute {

struct AdamHyperParams {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamHyperParams from(const TrainingConfig& cfg) {
    return {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  }
};

/// Moment estimates for one parameter list, in the list's order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;

  static AdamState for_parameters(const ParameterList& params);
};

/// One bias-corrected Adam update using each parameter's grad slot.
/// Throws ContractError naming the first parameter without a gradient.
void adam_step(const ParameterList& params, AdamState& state, const AdamHyperParams& hp);

}  // namespace capsroute
