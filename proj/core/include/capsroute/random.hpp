#pragma once

#include <cstdint>
#include <random>

#include "capsroute/tensor.hpp"

namespace capsroute {

using Rng = std::mt19937_64;

/// splitmix64 over (root, stream); gives independent seeds per purpose.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

void fill_uniform(Tensor& t, double limit, Rng& rng);
void fill_normal(Tensor& t, double stddev, Rng& rng);

}  // namespace capsroute
