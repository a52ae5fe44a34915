#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace oracle {

/// Central differences (f(x+h) - f(x-h)) / 2h of a scalar function with
/// respect to every entry of x. x is restored afterwards.
inline std::vector<double> central_difference(std::span<double> x, const std::function<double()>& f,
                                              double h = 1e-4) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// |a - n| / max(|a|, |n|); pairs where both magnitudes are under `floor`
/// compare absolutely against `floor`.
inline double relative_error(double analytic, double numeric, double floor = 1e-7) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

struct Comparison {
  double max_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t count = 0;
};

inline Comparison compare(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-7) {
  Comparison c;
  c.count = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i], floor);
    if (e > c.max_error) {
      c.max_error = e;
      c.worst_index = i;
    }
  }
  return c;
}

}  // namespace oracle
