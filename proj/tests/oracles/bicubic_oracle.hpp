#pragma once

#include <algorithm>
#include <cmath>

#include "palmpipe/core_types.hpp"

// Brute-force cubic convolution: every integer source position within reach
// of the sample point contributes, out-of-range positions read the nearest
// border cell. Deliberately not separable and not tap-window based.
namespace oracle {

inline double keys_weight(double t) {
  constexpr double a = -0.5;
  const double x = std::fabs(t);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
  return 0.0;
}

inline palmpipe::Grid3 bicubic_resample(const palmpipe::Grid10& g) {
  palmpipe::Grid3 out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double sy = (i + 0.5) * 10.0 / 3.0 - 0.5;
      const double sx = (j + 0.5) * 10.0 / 3.0 - 0.5;
      long double acc = 0.0L;
      for (int m = -6; m <= 15; ++m) {
        for (int n = -6; n <= 15; ++n) {
          const double w = keys_weight(sy - m) * keys_weight(sx - n);
          if (w == 0.0) continue;
          acc += w * g(std::clamp(m, 0, 9), std::clamp(n, 0, 9));
        }
      }
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

inline palmpipe::Grid3 bicubic_resize(const palmpipe::Grid10& g) {
  palmpipe::Grid3 out = bicubic_resample(g);
  for (auto& v : out.cells) v = std::min(std::max(v, 0.0) / 9.0, 1.0);
  return out;
}

}  // namespace oracle
