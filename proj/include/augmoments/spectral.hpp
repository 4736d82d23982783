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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "augmoments/core.hpp"
#include "augmoments/distribution.hpp"
#include "augmoments/moments.hpp"
#include "augmoments/random.hpp"

namespace augmoments {

inline constexpr double kRankTolerance = 1e-10;
inline constexpr std::size_t kMaxDenseEigenSize = 4096;

/// Eigenpairs of an augmentation variance, eigenvalues descending.
struct SpectralFactor {
  Vector eigenvalues;
  Matrix eigenvectors;  // columns, orthonormal
  std::size_t rank = 0;
  Matrix tangent;       // D x rank, eigenvectors scaled by sqrt(eigenvalue)
  double tolerance = kRankTolerance;
};

namespace detail {

// First coefficient that is not round-off is made positive.
inline void fix_signs(Matrix& q) {
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    const double scale = q.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      if (std::abs(q(r, c)) > 1e-12 * scale) {
        if (q(r, c) < 0.0) q.col(c) *= -1.0;
        break;
      }
    }
  }
}

inline void finish(SpectralFactor& f) {
  const Eigen::Index n = f.eigenvalues.size();
  const double lmax = n > 0 ? std::max(0.0, f.eigenvalues[0]) : 0.0;
  const double cut = f.tolerance * lmax;
  f.rank = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (f.eigenvalues[i] < 0.0 && -f.eigenvalues[i] <= cut) f.eigenvalues[i] = 0.0;
    if (lmax > 0.0 && f.eigenvalues[i] > cut) ++f.rank;
  }
  fix_signs(f.eigenvectors);
  const auto r = static_cast<Eigen::Index>(f.rank);
  f.tangent = f.eigenvectors.leftCols(r) * f.eigenvalues.head(r).cwiseSqrt().asDiagonal();
}

}  // namespace detail

/// Full symmetric eigendecomposition with descending eigenvalues, numerical
/// rank at tolerance * lambda_max, and the tangent factor.
inline SpectralFactor eig_sym(const Matrix& sigma, double tolerance = kRankTolerance) {
  if (sigma.rows() != sigma.cols()) throw ArgumentError("eig_sym: matrix is not square");
  if (static_cast<std::size_t>(sigma.rows()) > kMaxDenseEigenSize) {
    throw ArgumentError("eig_sym: dimension above dense limit; use subspace_iteration");
  }
  if (!sigma.allFinite()) throw ArgumentError("eig_sym: non-finite entries");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if (sigma.rows() > 0 && (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw ArgumentError("eig_sym: matrix is not symmetric");
  }
  SpectralFactor f;
  f.tolerance = tolerance;
  if (sigma.rows() == 0) return f;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  if (es.info() != Eigen::Success) throw NumericalError("eig_sym: eigensolver did not converge");
  f.eigenvalues = es.eigenvalues().reverse();
  f.eigenvectors = es.eigenvectors().rowwise().reverse();
  detail::finish(f);
  return f;
}

/// Eigenpairs of factor * factor^T. When the factor has fewer columns than
/// rows the small Gram matrix is decomposed instead; eigenvectors beyond the
/// factor's column count are not returned.
inline SpectralFactor eig_from_factor(const Matrix& factor, double tolerance = kRankTolerance) {
  if (factor.cols() >= factor.rows()) {
    Matrix s = factor * factor.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    return eig_sym(s, tolerance);
  }
  const Matrix gram = factor.transpose() * factor;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  if (es.info() != Eigen::Success) throw NumericalError("eig_from_factor: eigensolver did not converge");
  SpectralFactor f;
  f.tolerance = tolerance;
  f.eigenvalues = es.eigenvalues().reverse();
  const Matrix v = es.eigenvectors().rowwise().reverse();
  f.eigenvectors = Matrix::Zero(factor.rows(), factor.cols());
  const double lmax = std::max(0.0, f.eigenvalues.size() ? f.eigenvalues[0] : 0.0);
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    if (f.eigenvalues[c] > tolerance * lmax && f.eigenvalues[c] > 0.0) {
      f.eigenvectors.col(c) = factor * v.col(c) / std::sqrt(f.eigenvalues[c]);
      f.eigenvectors.col(c).normalize();
    }
  }
  detail::finish(f);
  return f;
}

/// Metadata recorded with streaming decompositions.
struct SubspaceIterationInfo {
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  std::size_t block = 0;
};

/// Top-r eigenpairs of factor * factor^T by block subspace iteration with a
/// seeded Gaussian start; never forms the D x D matrix.
inline SpectralFactor subspace_iteration(const Matrix& factor, std::size_t r, std::size_t iterations,
                                         std::uint64_t seed, SubspaceIterationInfo* info = nullptr,
                                         double tolerance = kRankTolerance) {
  const Eigen::Index d = factor.rows();
  const auto block = static_cast<Eigen::Index>(std::min<std::size_t>(r + 8, static_cast<std::size_t>(d)));
  SplitMix64 rng(seed);
  Matrix q(d, block);
  for (Eigen::Index c = 0; c < block; ++c) {
    for (Eigen::Index i = 0; i < d; ++i) q(i, c) = rng.normal();
  }
  for (std::size_t it = 0; it < iterations; ++it) {
    Matrix z = factor * (factor.transpose() * q);
    Eigen::HouseholderQR<Matrix> qr(z);
    q = qr.householderQ() * Matrix::Identity(d, block);
  }
  // Rayleigh-Ritz on the converged block
  const Matrix b = factor.transpose() * q;
  const Matrix small = b.transpose() * b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(small);
  SpectralFactor f;
  f.tolerance = tolerance;
  const auto keep = static_cast<Eigen::Index>(std::min<std::size_t>(r, static_cast<std::size_t>(block)));
  f.eigenvalues = es.eigenvalues().reverse().head(keep);
  f.eigenvectors = (q * es.eigenvectors().rowwise().reverse()).leftCols(keep);
  detail::finish(f);
  if (info) *info = {seed, iterations, static_cast<std::size_t>(block)};
  return f;
}

/// Top-k eigenvectors reshaped onto the grid, unit l2 norm each.
inline std::vector<Image> top_eigvec_images(const SpectralFactor& factor, const Grid& grid, std::size_t k) {
  if (k > factor.rank) {
    throw RangeError("top_eigvec_images: k=" + std::to_string(k) + " exceeds rank " +
                     std::to_string(factor.rank));
  }
  if (static_cast<std::size_t>(factor.eigenvectors.rows()) != grid.size()) {
    throw ShapeError("top_eigvec_images: eigenvector length does not match grid");
  }
  std::vector<Image> out;
  out.reserve(k);
  for (std::size_t c = 0; c < k; ++c) out.push_back(to_image(grid, factor.eigenvectors.col(static_cast<Eigen::Index>(c))));
  return out;
}

struct RankPoint {
  double amplitude = 0.0;
  std::size_t rank = 0;
  double lambda_max = 0.0;
  double trace = 0.0;
};

/// Default quadrature size for rank sweeps. Ranks at tau = 1e-10 resolve only
/// once the rule has far more nodes than the rank itself; with 129 nodes a
/// textured 32x32 image saturates near the node count.
inline constexpr std::size_t kRankSweepNodes = 2049;

/// Numerical rank of the augmentation variance for each amplitude. The
/// variance comes from the centered quadrature factor on an aligned rule.
inline std::vector<RankPoint> rank_sweep(TransformKind kind, const std::vector<double>& amplitudes,
                                         const Image& img,
                                         const std::function<ParamDistribution(double)>& dist_builder,
                                         std::size_t n_nodes = kRankSweepNodes, double tolerance = kRankTolerance) {
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (amplitudes[i] < 0.0) throw ArgumentError("rank_sweep: amplitudes must be >= 0");
    if (i > 0 && amplitudes[i] < amplitudes[i - 1]) throw ArgumentError("rank_sweep: amplitudes must be ascending");
  }
  std::vector<RankPoint> out;
  for (double a : amplitudes) {
    const ParamDistribution dist = dist_builder(a);
    const QuadratureRule rule = aligned_quadrature(kind, dist, img.grid(), n_nodes);
    const Matrix c = centered_factor(kind, dist, img, rule);
    const SpectralFactor f = eig_from_factor(c, tolerance);
    RankPoint p;
    p.amplitude = a;
    p.rank = f.rank;
    p.lambda_max = f.eigenvalues.size() ? std::max(0.0, f.eigenvalues[0]) : 0.0;
    p.trace = c.squaredNorm();
    out.push_back(p);
  }
  return out;
}

/// Degree-valued amplitude a maps to unif(-a, a) (a = 0 gives a Dirac at the
/// identity parameter).
inline std::function<ParamDistribution(double)> symmetric_uniform_builder(TransformKind kind, double unit = 1.0) {
  return [kind, unit](double a) -> ParamDistribution {
    const double centre = identity_theta(kind).first;
    if (a == 0.0) {
      if (arity(kind) == 2) return ParamDistribution::product(Dirac{centre}, Dirac{centre});
      return ParamDistribution::dirac(centre);
    }
    const Uniform u{centre - a * unit, centre + a * unit};
    if (arity(kind) == 2) return ParamDistribution::product(u, u);
    return ParamDistribution(u);
  };
}

}  // namespace augmoments
