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

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "augmoments/core.hpp"

namespace augmoments {

/// Warp families. Translation and Shear take a parameter pair, the rest a
/// scalar. Rotation is in radians, Zoom is a positive scale factor.
enum class TransformKind { Translation, ShearHorizontal, ShearVertical, Shear, Rotation, Zoom };

inline std::size_t arity(TransformKind kind) {
  return (kind == TransformKind::Translation || kind == TransformKind::Shear) ? 2 : 1;
}

inline std::string_view name(TransformKind kind) {
  switch (kind) {
    case TransformKind::Translation: return "translation";
    case TransformKind::ShearHorizontal: return "shear-h";
    case TransformKind::ShearVertical: return "shear-v";
    case TransformKind::Shear: return "shear";
    case TransformKind::Rotation: return "rotation";
    case TransformKind::Zoom: return "zoom";
  }
  return "?";
}

inline TransformKind parse_kind(std::string_view s) {
  if (s == "translation") return TransformKind::Translation;
  if (s == "shear-h" || s == "shear-horizontal") return TransformKind::ShearHorizontal;
  if (s == "shear-v" || s == "shear-vertical") return TransformKind::ShearVertical;
  if (s == "shear") return TransformKind::Shear;
  if (s == "rotation") return TransformKind::Rotation;
  if (s == "zoom") return TransformKind::Zoom;
  throw ArgumentError("unknown transform kind '" + std::string(s) + "'");
}

/// Transform parameter. Scalar transforms read only `first`.
struct Theta {
  double first = 0.0;
  double second = 0.0;
  bool operator==(const Theta&) const = default;
};

/// Parameter value that leaves every image unchanged.
inline Theta identity_theta(TransformKind kind) {
  return kind == TransformKind::Zoom ? Theta{1.0, 0.0} : Theta{0.0, 0.0};
}

inline void validate_theta(TransformKind kind, Theta theta) {
  if (!std::isfinite(theta.first) || !std::isfinite(theta.second)) {
    throw ArgumentError("transform parameter must be finite");
  }
  if (kind == TransformKind::Zoom && !(theta.first > 0.0)) {
    throw ArgumentError("zoom parameter must be > 0");
  }
}

/// Source coordinate read by target coordinate p. Content moves by +theta
/// under translation; rotation reads R(-theta)p; zoom reads p/theta.
inline Coord warp_coord(TransformKind kind, Theta theta, Coord p) {
  validate_theta(kind, theta);
  switch (kind) {
    case TransformKind::Translation:
      return {p.x - theta.first, p.y - theta.second};
    case TransformKind::ShearHorizontal:
      return {p.x - theta.first * p.y, p.y};
    case TransformKind::ShearVertical:
      return {p.x, p.y - theta.first * p.x};
    case TransformKind::Shear:
      return {p.x - theta.first * p.y, p.y - theta.second * p.x};
    case TransformKind::Rotation: {
      const double c = std::cos(theta.first);
      const double s = std::sin(theta.first);
      return {c * p.x + s * p.y, -s * p.x + c * p.y};
    }
    case TransformKind::Zoom:
      return {p.x / theta.first, p.y / theta.first};
  }
  return p;
}

namespace detail {

// Positions this close to a pixel center are treated as on it, so identity
// parameters give exact identity weights despite coordinate round-off.
inline constexpr double kSnap = 1e-9;

inline double snap(double v) {
  const double r = std::nearbyint(v);
  return std::abs(v - r) < kSnap ? r : v;
}

}  // namespace detail

struct Tap {
  std::size_t index = 0;
  double weight = 0.0;
};

/// Up to four bilinear taps for one target pixel.
struct TapSet {
  std::array<Tap, 4> taps{};
  std::size_t count = 0;
};

/// Bilinear footprint of fractional source position (row, col) with zero
/// padding: taps falling outside the grid are dropped, zero weights skipped.
inline TapSet bilinear_taps(const Grid& g, double row, double col) {
  TapSet out;
  row = detail::snap(row);
  col = detail::snap(col);
  const double r0 = std::floor(row);
  const double c0 = std::floor(col);
  const double fr = row - r0;
  const double fc = col - c0;
  const double h = static_cast<double>(g.height());
  const double w = static_cast<double>(g.width());
  const double wr[2] = {1.0 - fr, fr};
  const double wc[2] = {1.0 - fc, fc};
  for (int a = 0; a < 2; ++a) {
    const double rr = r0 + a;
    if (wr[a] == 0.0 || rr < 0.0 || rr >= h) continue;
    for (int b = 0; b < 2; ++b) {
      const double cc = c0 + b;
      if (wc[b] == 0.0 || cc < 0.0 || cc >= w) continue;
      out.taps[out.count++] = {static_cast<std::size_t>(rr) * g.width() + static_cast<std::size_t>(cc),
                               wr[a] * wc[b]};
    }
  }
  return out;
}

/// Taps of row `target` (flat index) of M(theta).
inline TapSet operator_row(TransformKind kind, Theta theta, const Grid& g, std::size_t target) {
  const auto [i, j] = unflatten(g, target);
  const Coord src = warp_coord(kind, theta, pixel_to_coord(g, i, j));
  const auto [row, col] = coord_to_pixel(g, src);
  return bilinear_taps(g, row, col);
}

struct SparseEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  double weight = 0.0;
};

/// M(theta) in coordinate form: at most four entries per row, row-major
/// order, weights in (0, 1].
class SparseOperator {
 public:
  SparseOperator(Grid grid, std::vector<SparseEntry> entries)
      : grid_(grid), entries_(std::move(entries)) {}

  const Grid& grid() const { return grid_; }
  const std::vector<SparseEntry>& entries() const { return entries_; }
  std::size_t nonzeros() const { return entries_.size(); }

  std::vector<double> row_sums() const {
    std::vector<double> s(grid_.size(), 0.0);
    for (const auto& e : entries_) s[e.row] += e.weight;
    return s;
  }

  std::vector<double> to_dense() const {
    const std::size_t d = grid_.size();
    std::vector<double> m(d * d, 0.0);
    for (const auto& e : entries_) m[e.row * d + e.col] += e.weight;
    return m;
  }

 private:
  Grid grid_;
  std::vector<SparseEntry> entries_;
};

inline SparseOperator build_operator(TransformKind kind, Theta theta, const Grid& g) {
  validate_theta(kind, theta);
  std::vector<SparseEntry> entries;
  entries.reserve(4 * g.size());
  for (std::size_t r = 0; r < g.size(); ++r) {
    const TapSet ts = operator_row(kind, theta, g, r);
    for (std::size_t t = 0; t < ts.count; ++t) entries.push_back({r, ts.taps[t].index, ts.taps[t].weight});
  }
  return SparseOperator(g, std::move(entries));
}

inline Image apply_operator(const SparseOperator& op, const Image& img) {
  require_same_grid(op.grid(), img.grid(), "apply_operator");
  Image out(img.grid());
  for (const auto& e : op.entries()) out[e.row] += e.weight * img[e.col];
  return out;
}

/// Applies M(theta) to img one row at a time without building the operator.
/// Agrees with apply_operator bit for bit.
inline Image transform_image(TransformKind kind, Theta theta, const Image& img) {
  validate_theta(kind, theta);
  const Grid& g = img.grid();
  Image out(g);
  for (std::size_t r = 0; r < g.size(); ++r) {
    const TapSet ts = operator_row(kind, theta, g, r);
    double acc = 0.0;
    for (std::size_t t = 0; t < ts.count; ++t) acc += ts.taps[t].weight * img[ts.taps[t].index];
    out[r] = acc;
  }
  return out;
}

/// Coordinate-space warp T(u,v) = I(t(u,v)) with bilinear interpolation and
/// zero padding. Written directly in pixel units, independent of the operator
/// row builder; used as the test oracle for build_operator.
inline Image reference_transform(TransformKind kind, Theta theta, const Image& img) {
  validate_theta(kind, theta);
  const Grid& g = img.grid();
  const auto h = static_cast<double>(g.height());
  const auto w = static_cast<double>(g.width());
  const double ci = 0.5 * (h - 1.0);
  const double cj = 0.5 * (w - 1.0);
  auto at = [&](long i, long j) {
    if (i < 0 || j < 0 || i >= static_cast<long>(g.height()) || j >= static_cast<long>(g.width())) return 0.0;
    return img(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  };
  auto near_int = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  const double a = theta.first;
  const double b = theta.second;
  Image out(g);
  for (std::size_t i = 0; i < g.height(); ++i) {
    for (std::size_t j = 0; j < g.width(); ++j) {
      const double x = (static_cast<double>(j) - cj) / w;
      const double y = (static_cast<double>(i) - ci) / h;
      double sx = x;
      double sy = y;
      switch (kind) {
        case TransformKind::Translation:
          sx = x - a;
          sy = y - b;
          break;
        case TransformKind::ShearHorizontal:
          sx = x - a * y;
          break;
        case TransformKind::ShearVertical:
          sy = y - a * x;
          break;
        case TransformKind::Shear:
          sx = x - a * y;
          sy = y - b * x;
          break;
        case TransformKind::Rotation:
          sx = std::cos(a) * x + std::sin(a) * y;
          sy = std::cos(a) * y - std::sin(a) * x;
          break;
        case TransformKind::Zoom:
          sx = x / a;
          sy = y / a;
          break;
      }
      const double fi = near_int(sy * h + ci);
      const double fj = near_int(sx * w + cj);
      const double i0 = std::floor(fi);
      const double j0 = std::floor(fj);
      const double di = fi - i0;
      const double dj = fj - j0;
      const auto ii = static_cast<long>(i0);
      const auto jj = static_cast<long>(j0);
      double v = (1.0 - di) * (1.0 - dj) * at(ii, jj);
      if (dj != 0.0) v += (1.0 - di) * dj * at(ii, jj + 1);
      if (di != 0.0) v += di * (1.0 - dj) * at(ii + 1, jj);
      if (di != 0.0 && dj != 0.0) v += di * dj * at(ii + 1, jj + 1);
      out(i, j) = v;
    }
  }
  return out;
}

}  // namespace augmoments
