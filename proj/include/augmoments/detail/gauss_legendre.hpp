// Copyright 2026 The augmoments Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace augmoments::detail {

struct GaussLegendre {
  std::vector<double> nodes;    // ascending, in [-1, 1]
  std::vector<double> weights;  // sum to 2
};

// Newton iteration on P_n from the Chebyshev initial guess; converges to
// machine precision for every n we use (n <= a few thousand).
inline GaussLegendre gauss_legendre(std::size_t n) {
  GaussLegendre gl;
  gl.nodes.assign(n, 0.0);
  gl.weights.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (std::size_t k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / static_cast<double>(k);
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / static_cast<double>(k);
    }
    dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    gl.nodes[i] = -z;
    gl.nodes[n - 1 - i] = z;
    gl.weights[i] = w;
    gl.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) gl.nodes[n / 2] = 0.0;
  return gl;
}

}  // namespace augmoments::detail
