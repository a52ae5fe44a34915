#include "capsroute/random.hpp"

namespace capsroute {

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = dist(rng);
}

void fill_normal(Tensor& t, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
}

}  // namespace capsroute
