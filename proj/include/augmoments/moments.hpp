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
#include <vector>

#include <Eigen/Dense>

#include "augmoments/core.hpp"
#include "augmoments/distribution.hpp"
#include "augmoments/parallel.hpp"
#include "augmoments/transform.hpp"

namespace augmoments {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline Vector to_vector(const Image& img) {
  return Eigen::Map<const Vector>(img.data().data(), static_cast<Eigen::Index>(img.size()));
}

inline Image to_image(const Grid& g, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != g.size()) {
    throw ShapeError("to_image: vector length does not match grid " + to_string(g));
  }
  return Image(g, std::vector<double>(v.data(), v.data() + v.size()));
}

/// E[M(theta)] as a dense D x D matrix.
struct ExpectedOperator {
  Grid grid;
  RowMatrix matrix;
};

/// First and second moments of T(x) under the parameter law.
struct MomentSet {
  Grid grid;
  Vector mean;      // E[T(x)]
  Matrix second;    // E[T(x) T(x)^T]
  Matrix variance;  // second - mean mean^T
};

/// sum_k w_k M(theta_k), rows filled in parallel, nodes in ascending order
/// within each row.
inline ExpectedOperator expected_operator(TransformKind kind, const ParamDistribution& dist,
                                          const Grid& grid, const QuadratureRule& quad) {
  require_arity(kind, dist);
  for (const auto& n : quad.nodes) validate_theta(kind, n.theta);
  const std::size_t d = grid.size();
  ExpectedOperator op{grid, RowMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
  parallel_for_blocks(d, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const auto [i, j] = unflatten(grid, r);
      const Coord target = pixel_to_coord(grid, i, j);
      double* row = op.matrix.row(static_cast<Eigen::Index>(r)).data();
      for (const auto& node : quad.nodes) {
        const auto [sr, sc] = coord_to_pixel(grid, warp_coord(kind, node.theta, target));
        const TapSet ts = bilinear_taps(grid, sr, sc);
        for (std::size_t t = 0; t < ts.count; ++t) row[ts.taps[t].index] += node.weight * ts.taps[t].weight;
      }
    }
  });
  return op;
}

inline Image expected_image(const ExpectedOperator& op, const Image& img) {
  require_same_grid(op.grid, img.grid(), "expected_image");
  return to_image(img.grid(), op.matrix * to_vector(img));
}

/// sum_k w_k T_{theta_k}(x) without forming E[M]. Equal to
/// expected_image(expected_operator(...), img) by linearity.
inline Image quadrature_expected_image(TransformKind kind, const ParamDistribution& dist,
                                       const Image& img, const QuadratureRule& quad) {
  require_arity(kind, dist);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(img.size()));
  for (const auto& node : quad.nodes) {
    const Image t = transform_image(kind, node.theta, img);
    acc += node.weight * to_vector(t);
  }
  return to_image(img.grid(), acc);
}

/// Transformed images at every node, one column per node, each scaled by
/// sqrt(weight). samples * samples^T is the second moment.
inline Matrix weighted_samples(TransformKind kind, const ParamDistribution& dist, const Image& img,
                               const QuadratureRule& quad) {
  require_arity(kind, dist);
  Matrix a(static_cast<Eigen::Index>(img.size()), static_cast<Eigen::Index>(quad.size()));
  parallel_for_blocks(quad.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Image t = transform_image(kind, quad.nodes[k].theta, img);
      a.col(static_cast<Eigen::Index>(k)) = std::sqrt(quad.nodes[k].weight) * to_vector(t);
    }
  });
  return a;
}

/// E[T(x) T(x)^T] = sum_k w_k (M_k x)(M_k x)^T.
inline Matrix second_moment(TransformKind kind, const ParamDistribution& dist, const Image& img,
                            const QuadratureRule& quad) {
  const Matrix a = weighted_samples(kind, dist, img, quad);
  Matrix s = Matrix::Zero(a.rows(), a.rows());
  s.selfadjointView<Eigen::Lower>().rankUpdate(a);
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return s;
}

inline MomentSet moment_set(TransformKind kind, const ParamDistribution& dist, const Image& img,
                            const QuadratureRule& quad) {
  const Matrix a = weighted_samples(kind, dist, img, quad);
  Vector mean = Vector::Zero(a.rows());
  for (std::size_t k = 0; k < quad.size(); ++k) {
    mean += std::sqrt(quad.nodes[k].weight) * a.col(static_cast<Eigen::Index>(k));
  }
  Matrix second = Matrix::Zero(a.rows(), a.rows());
  second.selfadjointView<Eigen::Lower>().rankUpdate(a);
  second.triangularView<Eigen::StrictlyUpper>() = second.transpose();
  Matrix variance = second - mean * mean.transpose();
  return {img.grid(), std::move(mean), std::move(second), std::move(variance)};
}

/// Pixel variances and selected covariance rows without the D x D matrix,
/// for grids too large for dense storage.
struct StreamingMoments {
  Grid grid;
  Vector mean;
  Vector variance_diagonal;
  std::vector<std::size_t> rows;
  std::vector<Vector> covariance_rows;  // row k of the variance for rows[k]
};

inline StreamingMoments streaming_moments(TransformKind kind, const ParamDistribution& dist,
                                          const Image& img, const QuadratureRule& quad,
                                          std::vector<std::size_t> rows = {}) {
  const Image mean_img = quadrature_expected_image(kind, dist, img, quad);
  for (std::size_t r : rows) {
    if (r >= img.size()) throw RangeError("streaming_moments: covariance row out of range");
  }
  StreamingMoments sm{img.grid(), to_vector(mean_img), Vector::Zero(static_cast<Eigen::Index>(img.size())),
                      rows, std::vector<Vector>(rows.size(), Vector::Zero(static_cast<Eigen::Index>(img.size())))};
  for (const auto& node : quad.nodes) {
    const Vector c = to_vector(transform_image(kind, node.theta, img)) - sm.mean;
    sm.variance_diagonal += node.weight * c.cwiseProduct(c);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      sm.covariance_rows[k] += (node.weight * c[static_cast<Eigen::Index>(rows[k])]) * c;
    }
  }
  return sm;
}

/// Centered square-root factor of the variance: column k is
/// sqrt(w_k) (M_k x - mean), so factor * factor^T equals the variance.
inline Matrix centered_factor(TransformKind kind, const ParamDistribution& dist, const Image& img,
                              const QuadratureRule& quad) {
  Matrix a = weighted_samples(kind, dist, img, quad);
  Vector mean = Vector::Zero(a.rows());
  for (std::size_t k = 0; k < quad.size(); ++k) {
    mean += std::sqrt(quad.nodes[k].weight) * a.col(static_cast<Eigen::Index>(k));
  }
  for (std::size_t k = 0; k < quad.size(); ++k) {
    a.col(static_cast<Eigen::Index>(k)) -= std::sqrt(quad.nodes[k].weight) * mean;
  }
  return a;
}

/// W V[T(x)] W^T accumulated node by node: O(K D) memory.
inline Matrix projected_variance(TransformKind kind, const ParamDistribution& dist, const Image& img,
                                 const QuadratureRule& quad, const Matrix& weights) {
  if (static_cast<std::size_t>(weights.cols()) != img.size()) {
    throw ShapeError("projected_variance: weight columns must equal image size");
  }
  const Vector mean = to_vector(quadrature_expected_image(kind, dist, img, quad));
  const Vector wm = weights * mean;
  Matrix out = Matrix::Zero(weights.rows(), weights.rows());
  for (const auto& node : quad.nodes) {
    const Vector c = weights * to_vector(transform_image(kind, node.theta, img)) - wm;
    out.noalias() += node.weight * c * c.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms for translation and shear.
//
// Under both transforms every bilinear weight is a hat function
// hat(d - alpha theta), hat(z) = max(0, 1 - |z|), of the parameter: d is the
// integer pixel offset between target and source and alpha converts theta to
// a pixel displacement (the image width or height for translation,
// row/column coordinate times width/height for shear). The expected weights
// are therefore hat functions integrated against p, which is piecewise
// polynomial times the density and has closed-form interval moments.

namespace detail {

inline double hat(double z) { return std::max(0.0, 1.0 - std::abs(z)); }

struct LinearForm {
  double c0 = 0.0;
  double c1 = 0.0;
};

// On a piece where d - alpha theta keeps its sign and stays inside (-1, 1),
// hat(d - alpha theta) = (1 - s d) + s alpha theta with s the sign.
inline bool hat_piece(double d, double alpha, double mid, LinearForm& out) {
  const double z = d - alpha * mid;
  if (std::abs(z) >= 1.0) return false;
  const double s = z >= 0.0 ? 1.0 : -1.0;
  out = {1.0 - s * d, s * alpha};
  return true;
}

inline void add_breakpoints(std::vector<double>& bp, double d, double alpha, double lo, double hi) {
  if (alpha == 0.0) return;
  for (double off : {-1.0, 0.0, 1.0}) {
    const double t = (d + off) / alpha;
    if (t > lo && t < hi) bp.push_back(t);
  }
}

/// E[hat(d - alpha theta)].
inline double hat_expectation(const ScalarDistribution& dist, double alpha, double d) {
  if (is_dirac(dist)) return hat(d - alpha * std::get<Dirac>(dist).at);
  if (alpha == 0.0) return hat(d);
  auto [lo, hi] = support(dist);
  // no overlap between the hat's theta-support and the distribution
  const double t1 = (d - 1.0) / alpha;
  const double t2 = (d + 1.0) / alpha;
  if (std::max(t1, t2) <= lo || std::min(t1, t2) >= hi) return 0.0;
  std::vector<double> bp{lo, hi};
  add_breakpoints(bp, d, alpha, lo, hi);
  std::sort(bp.begin(), bp.end());
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
    if (!(bp[p + 1] > bp[p])) continue;
    LinearForm f;
    if (!hat_piece(d, alpha, 0.5 * (bp[p] + bp[p + 1]), f)) continue;
    const auto m = interval_moments(dist, bp[p], bp[p + 1]);
    acc += f.c0 * m[0] + f.c1 * m[1];
  }
  return acc;
}

/// E[hat(d1 - alpha theta) hat(d2 - beta theta)].
inline double hat_pair_expectation(const ScalarDistribution& dist, double alpha, double d1,
                                   double beta, double d2) {
  if (is_dirac(dist)) {
    const double at = std::get<Dirac>(dist).at;
    return hat(d1 - alpha * at) * hat(d2 - beta * at);
  }
  if (alpha == 0.0) {
    const double c = hat(d1);
    return c == 0.0 ? 0.0 : c * hat_expectation(dist, beta, d2);
  }
  if (beta == 0.0) {
    const double c = hat(d2);
    return c == 0.0 ? 0.0 : c * hat_expectation(dist, alpha, d1);
  }
  auto [lo, hi] = support(dist);
  std::vector<double> bp{lo, hi};
  add_breakpoints(bp, d1, alpha, lo, hi);
  add_breakpoints(bp, d2, beta, lo, hi);
  std::sort(bp.begin(), bp.end());
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
    if (!(bp[p + 1] > bp[p])) continue;
    const double mid = 0.5 * (bp[p] + bp[p + 1]);
    LinearForm f;
    LinearForm g;
    if (!hat_piece(d1, alpha, mid, f) || !hat_piece(d2, beta, mid, g)) continue;
    const auto m = interval_moments(dist, bp[p], bp[p + 1]);
    acc += f.c0 * g.c0 * m[0] + (f.c0 * g.c1 + f.c1 * g.c0) * m[1] + f.c1 * g.c1 * m[2];
  }
  return acc;
}

// Kernel K[d + offset] = E[hat(d - alpha theta)] for d in [-(n-1), n-1].
inline std::vector<double> hat_kernel(const ScalarDistribution& dist, double alpha, std::size_t n) {
  std::vector<double> k(2 * n - 1, 0.0);
  const auto off = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::ptrdiff_t d = -off; d <= off; ++d) {
    k[static_cast<std::size_t>(d + off)] = hat_expectation(dist, alpha, static_cast<double>(d));
  }
  return k;
}

// G[a][b] = E[hat(a - (n-1) - n theta) hat(b - (n-1) - n theta)], zero
// unless |a - b| <= 1.
inline std::vector<double> translation_pair_table(const ScalarDistribution& s, std::ptrdiff_t n) {
  const std::ptrdiff_t m = 2 * n - 1;
  std::vector<double> t(static_cast<std::size_t>(m * m), 0.0);
  for (std::ptrdiff_t a = 0; a < m; ++a) {
    for (std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, a - 1); b <= std::min(m - 1, a + 1); ++b) {
      t[static_cast<std::size_t>(a * m + b)] =
          hat_pair_expectation(s, static_cast<double>(n), static_cast<double>(a - (n - 1)), static_cast<double>(n),
                               static_cast<double>(b - (n - 1)));
    }
  }
  return t;
}

}  // namespace detail

enum class Axis { Horizontal, Vertical };

/// Expected translated image as the discrete convolution of the image with
/// the parameter density pushed through the bilinear kernel. Zero padding at
/// the border, matching build_operator. A scalar distribution translates
/// along `axis` only.
inline Image translation_expected_analytic(const Image& img, const ParamDistribution& dist,
                                           Axis axis = Axis::Horizontal) {
  const Grid& g = img.grid();
  const std::size_t h = g.height();
  const std::size_t w = g.width();
  ScalarDistribution horiz = Dirac{0.0};
  ScalarDistribution vert = Dirac{0.0};
  if (dist.is_product()) {
    horiz = dist.first();
    vert = dist.second();
  } else if (axis == Axis::Horizontal) {
    horiz = dist.first();
  } else {
    vert = dist.first();
  }
  const auto kx = detail::hat_kernel(horiz, static_cast<double>(w), w);
  const auto ky = detail::hat_kernel(vert, static_cast<double>(h), h);
  const auto ox = static_cast<std::ptrdiff_t>(w) - 1;
  const auto oy = static_cast<std::ptrdiff_t>(h) - 1;

  std::vector<double> tmp(g.size(), 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w; ++k) {
        acc += img(i, k) * kx[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(k) + ox)];
      }
      tmp[i * w + j] = acc;
    }
  }
  Image out(g);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < h; ++k) {
        acc += tmp[k * w + j] * ky[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(k) + oy)];
      }
      out(i, j) = acc;
    }
  }
  return out;
}

/// Expected sheared image: each row (horizontal shear) or column (vertical
/// shear) is convolved with the density rescaled by that line's transverse
/// coordinate. A line through the center (odd sizes) is left unchanged.
inline Image shear_expected_analytic(const Image& img, const ParamDistribution& dist, Axis axis) {
  if (dist.is_product()) throw ArgumentError("shear_expected_analytic: requires a scalar distribution");
  const Grid& g = img.grid();
  const std::size_t h = g.height();
  const std::size_t w = g.width();
  Image out(g);
  if (axis == Axis::Horizontal) {
    for (std::size_t i = 0; i < h; ++i) {
      const double alpha = pixel_to_coord(g, i, 0).y * static_cast<double>(w);
      const auto k = detail::hat_kernel(dist.first(), alpha, w);
      const auto o = static_cast<std::ptrdiff_t>(w) - 1;
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
          acc += img(i, c) * k[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(c) + o)];
        }
        out(i, j) = acc;
      }
    }
  } else {
    for (std::size_t j = 0; j < w; ++j) {
      const double alpha = pixel_to_coord(g, 0, j).x * static_cast<double>(h);
      const auto k = detail::hat_kernel(dist.first(), alpha, h);
      const auto o = static_cast<std::ptrdiff_t>(h) - 1;
      for (std::size_t i = 0; i < h; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < h; ++r) {
          acc += img(r, j) * k[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(r) + o)];
        }
        out(i, j) = acc;
      }
    }
  }
  return out;
}

inline constexpr std::size_t kMaxAnalyticSecondMomentSize = 1024;

/// E[T(x) T(x)^T] for translation in closed form. Entry (p, q) is the image
/// correlated with itself at the offset between p and q, weighted by the
/// pairwise hat integrals; O(D^2 * (h + w)) work, so limited to small grids.
inline Matrix translation_second_moment_analytic(const Image& img, const ParamDistribution& dist,
                                                 Axis axis = Axis::Horizontal) {
  const Grid& g = img.grid();
  if (g.size() > kMaxAnalyticSecondMomentSize) {
    throw ArgumentError("translation_second_moment_analytic: grid too large for dense closed form");
  }
  ScalarDistribution horiz = Dirac{0.0};
  ScalarDistribution vert = Dirac{0.0};
  if (dist.is_product()) {
    horiz = dist.first();
    vert = dist.second();
  } else if (axis == Axis::Horizontal) {
    horiz = dist.first();
  } else {
    vert = dist.first();
  }
  const auto h = static_cast<std::ptrdiff_t>(g.height());
  const auto w = static_cast<std::ptrdiff_t>(g.width());
  const auto gx = detail::translation_pair_table(horiz, w);
  const auto gy = detail::translation_pair_table(vert, h);
  const std::ptrdiff_t mx = 2 * w - 1;
  const std::ptrdiff_t my = 2 * h - 1;
  const auto d = static_cast<Eigen::Index>(g.size());
  Matrix s = Matrix::Zero(d, d);
  for (std::ptrdiff_t p = 0; p < d; ++p) {
    const std::ptrdiff_t ip = p / w, jp = p % w;
    for (std::ptrdiff_t q = p; q < d; ++q) {
      const std::ptrdiff_t iq = q / w, jq = q % w;
      double acc = 0.0;
      for (std::ptrdiff_t ky = 0; ky < h; ++ky) {
        const std::ptrdiff_t a = ip - ky + h - 1;
        for (std::ptrdiff_t ly = std::max<std::ptrdiff_t>(0, ky + (iq - ip) - 1);
             ly <= std::min(h - 1, ky + (iq - ip) + 1); ++ly) {
          const double gyv = gy[static_cast<std::size_t>(a * my + (iq - ly + h - 1))];
          if (gyv == 0.0) continue;
          double row_acc = 0.0;
          for (std::ptrdiff_t kx = 0; kx < w; ++kx) {
            const double xk = img(static_cast<std::size_t>(ky), static_cast<std::size_t>(kx));
            if (xk == 0.0) continue;
            const std::ptrdiff_t ax = jp - kx + w - 1;
            for (std::ptrdiff_t lx = std::max<std::ptrdiff_t>(0, kx + (jq - jp) - 1);
                 lx <= std::min(w - 1, kx + (jq - jp) + 1); ++lx) {
              row_acc += xk * img(static_cast<std::size_t>(ly), static_cast<std::size_t>(lx)) *
                         gx[static_cast<std::size_t>(ax * mx + (jq - lx + w - 1))];
            }
          }
          acc += gyv * row_acc;
        }
      }
      s(p, q) = acc;
      s(q, p) = acc;
    }
  }
  return s;
}

/// E[T(x) T(x)^T] for a single-axis shear in closed form: the expectation of
/// a product of two hats whose slopes are the two lines' transverse
/// coordinates. Limited to small grids.
inline Matrix shear_second_moment_analytic(const Image& img, const ParamDistribution& dist, Axis axis) {
  if (dist.is_product()) throw ArgumentError("shear_second_moment_analytic: requires a scalar distribution");
  const Grid& g = img.grid();
  if (g.size() > kMaxAnalyticSecondMomentSize) {
    throw ArgumentError("shear_second_moment_analytic: grid too large for dense closed form");
  }
  const auto d = static_cast<Eigen::Index>(g.size());
  Matrix s = Matrix::Zero(d, d);
  const bool horizontal = axis == Axis::Horizontal;
  // line = row (horizontal) or column (vertical); pos = index along the line
  const std::size_t len = horizontal ? g.width() : g.height();
  auto slope = [&](std::size_t line) {
    return horizontal ? pixel_to_coord(g, line, 0).y * static_cast<double>(g.width())
                      : pixel_to_coord(g, 0, line).x * static_cast<double>(g.height());
  };
  auto value = [&](std::size_t line, std::size_t pos) {
    return horizontal ? img(line, pos) : img(pos, line);
  };
  auto flat = [&](std::size_t line, std::size_t pos) {
    return static_cast<Eigen::Index>(horizontal ? line * g.width() + pos : pos * g.width() + line);
  };
  const std::size_t lines = horizontal ? g.height() : g.width();
  for (std::size_t l1 = 0; l1 < lines; ++l1) {
    const double a1 = slope(l1);
    for (std::size_t l2 = l1; l2 < lines; ++l2) {
      const double a2 = slope(l2);
      for (std::size_t p1 = 0; p1 < len; ++p1) {
        for (std::size_t p2 = 0; p2 < len; ++p2) {
          if (l1 == l2 && p2 < p1) continue;
          double acc = 0.0;
          for (std::size_t k = 0; k < len; ++k) {
            const double xk = value(l1, k);
            if (xk == 0.0) continue;
            for (std::size_t m = 0; m < len; ++m) {
              const double xm = value(l2, m);
              if (xm == 0.0) continue;
              acc += xk * xm *
                     detail::hat_pair_expectation(dist.first(), a1, static_cast<double>(p1) - static_cast<double>(k),
                                                  a2, static_cast<double>(p2) - static_cast<double>(m));
            }
          }
          s(flat(l1, p1), flat(l2, p2)) = acc;
          s(flat(l2, p2), flat(l1, p1)) = acc;
        }
      }
    }
  }
  return s;
}

namespace detail {

// E[(I (x) H) S (I (x) H)^T] (horizontal) or E[(V (x) I) S (V (x) I)^T]
// (vertical) for a one-axis translation with scalar law `s`.
inline Matrix translation_congruence_axis(const Matrix& sm, const Grid& g, const ScalarDistribution& s,
                                          bool horizontal) {
  const auto h = static_cast<std::ptrdiff_t>(g.height());
  const auto w = static_cast<std::ptrdiff_t>(g.width());
  const std::ptrdiff_t n = horizontal ? w : h;
  const auto table = translation_pair_table(s, n);
  const std::ptrdiff_t m = 2 * n - 1;
  const auto d = static_cast<Eigen::Index>(g.size());
  Matrix out = Matrix::Zero(d, d);
  // flat index of (line, pos) where pos runs along the translated axis
  auto flat = [&](std::ptrdiff_t line, std::ptrdiff_t pos) {
    return static_cast<Eigen::Index>(horizontal ? line * w + pos : pos * w + line);
  };
  const std::ptrdiff_t lines = horizontal ? h : w;
  parallel_for_blocks(static_cast<std::size_t>(d), [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto pi = static_cast<std::ptrdiff_t>(p) / w;
      const auto pj = static_cast<std::ptrdiff_t>(p) % w;
      const std::ptrdiff_t l1 = horizontal ? pi : pj;
      const std::ptrdiff_t p1 = horizontal ? pj : pi;
      for (std::ptrdiff_t l2 = 0; l2 < lines; ++l2) {
        for (std::ptrdiff_t p2 = 0; p2 < n; ++p2) {
          double acc = 0.0;
          for (std::ptrdiff_t c1 = 0; c1 < n; ++c1) {
            const std::ptrdiff_t a = p1 - c1 + n - 1;
            const std::ptrdiff_t centre = c1 + (p2 - p1);
            for (std::ptrdiff_t c2 = std::max<std::ptrdiff_t>(0, centre - 1); c2 <= std::min(n - 1, centre + 1); ++c2) {
              const double gv = table[static_cast<std::size_t>(a * m + (p2 - c2 + n - 1))];
              if (gv != 0.0) acc += gv * sm(flat(l1, c1), flat(l2, c2));
            }
          }
          out(static_cast<Eigen::Index>(p), flat(l2, p2)) = acc;
        }
      }
    }
  });
  return out;
}

}  // namespace detail

/// E[M(theta) S M(theta)^T] for translation, exact. With S = sum_n x_n x_n^T
/// this is sum_n E[T(x_n) T(x_n)^T] at a cost independent of n. The two
/// axes are independent, so the expectation factors into one pass per axis.
inline Matrix translation_expected_congruence(const Matrix& sm, const Grid& g, const ParamDistribution& dist,
                                              Axis axis = Axis::Horizontal) {
  const auto d = static_cast<Eigen::Index>(g.size());
  if (sm.rows() != d || sm.cols() != d) throw ShapeError("translation_expected_congruence: S must be D x D");
  ScalarDistribution horiz = Dirac{0.0};
  ScalarDistribution vert = Dirac{0.0};
  if (dist.is_product()) {
    horiz = dist.first();
    vert = dist.second();
  } else if (axis == Axis::Horizontal) {
    horiz = dist.first();
  } else {
    vert = dist.first();
  }
  Matrix out = detail::translation_congruence_axis(sm, g, horiz, true);
  out = detail::translation_congruence_axis(out, g, vert, false);
  return 0.5 * (out + out.transpose());
}

}  // namespace augmoments
