#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

/// Step-by-step routing written directly from the textbook recurrence,
/// with plain loops and no shared code.
struct RoutingResult {
  std::vector<double> v;                       // [N*D]
  std::vector<std::vector<double>> couplings;  // per iteration, [P*N]
};

inline RoutingResult scripted_routing(const std::vector<double>& votes, std::size_t P,
                                      std::size_t N, std::size_t D, std::size_t iterations) {
  auto u = [&](std::size_t i, std::size_t j, std::size_t d) { return votes[(i * N + j) * D + d]; };
  std::vector<double> b(P * N, 0.0);
  RoutingResult r;
  for (std::size_t it = 0; it < iterations; ++it) {
    // c_ij = exp(b_ij) / sum_k exp(b_ik)
    std::vector<double> c(P * N);
    for (std::size_t i = 0; i < P; ++i) {
      double top = b[i * N];
      for (std::size_t j = 1; j < N; ++j) top = std::max(top, b[i * N + j]);
      double z = 0.0;
      for (std::size_t j = 0; j < N; ++j) z += std::exp(b[i * N + j] - top);
      for (std::size_t j = 0; j < N; ++j) c[i * N + j] = std::exp(b[i * N + j] - top) / z;
    }
    r.couplings.push_back(c);

    // s_j = sum_i c_ij u_j|i ; v_j = |s|^2/(1+|s|^2) s/|s|
    std::vector<double> v(N * D, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      std::vector<double> s(D, 0.0);
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t d = 0; d < D; ++d) s[d] += c[i * N + j] * u(i, j, d);
      }
      double sq = 0.0;
      for (double x : s) sq += x * x;
      const double norm = std::sqrt(sq);
      const double factor = norm > 0.0 ? sq / (1.0 + sq) / norm : 0.0;
      for (std::size_t d = 0; d < D; ++d) v[j * D + d] = factor * s[d];
    }
    r.v = v;

    // b_ij += u_j|i . v_j
    if (it + 1 < iterations) {
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
          double dot = 0.0;
          for (std::size_t d = 0; d < D; ++d) dot += u(i, j, d) * v[j * D + d];
          b[i * N + j] += dot;
        }
      }
    }
  }
  return r;
}

}  // namespace oracle
