#include "capsroute/adam.hpp"

#include <cmath>

#include "capsroute/errors.hpp"

namespace capsroute {

AdamState AdamState::for_parameters(const ParameterList& params) {
  AdamState state;
  for (const auto& p : params) {
    state.m.emplace_back(p.value.size(), 0.0);
    state.v.emplace_back(p.value.size(), 0.0);
  }
  return state;
}

void adam_step(const ParameterList& params, AdamState& state, const AdamHyperParams& hp) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].value.has_grad()) {
      throw ContractError("missing gradient for parameter " + params[k].name);
    }
    if (state.m[k].size() != params[k].value.size()) {
      throw ContractError("optimizer state size mismatch for parameter " + params[k].name);
    }
  }

  state.t += 1;
  const auto t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor value = params[k].value;
    auto theta = value.data();
    auto g = value.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
  }
}

}  // namespace capsroute
