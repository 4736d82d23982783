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
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace augmoments {

inline constexpr const char* kVersion = "1.0.0";

// Error taxonomy. Every reader, builder and solver throws one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class RangeError : public Error {
 public:
  using Error::Error;
};
class ArgumentError : public Error {
 public:
  using Error::Error;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Uniform pixel grid. Pixel (i, j) is row i, column j; flat index i*width+j.
///
/// Continuous coordinates are center-anchored: the grid covers
/// [-0.5, 0.5)^2 and the image center sits at the origin, so rotation, zoom
/// and shear pivot about the middle of the image.
class Grid {
 public:
  Grid(std::size_t height, std::size_t width) : height_(height), width_(width) {
    if (height == 0 || width == 0) {
      throw ArgumentError("Grid: height and width must be >= 1");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return height_ * width_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t height_;
  std::size_t width_;
};

inline std::string to_string(const Grid& g) {
  return std::to_string(g.height()) + "x" + std::to_string(g.width());
}

struct Coord {
  double x = 0.0;
  double y = 0.0;
};

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PixelIndex&) const = default;
};

inline void check_pixel(const Grid& g, std::size_t i, std::size_t j) {
  if (i >= g.height() || j >= g.width()) {
    throw RangeError("pixel (" + std::to_string(i) + "," + std::to_string(j) +
                     ") outside grid " + to_string(g));
  }
}

inline Coord pixel_to_coord(const Grid& g, std::size_t i, std::size_t j) {
  check_pixel(g, i, j);
  return {(static_cast<double>(j) + 0.5) / static_cast<double>(g.width()) - 0.5,
          (static_cast<double>(i) + 0.5) / static_cast<double>(g.height()) - 0.5};
}

/// Continuous coordinate to fractional (row, col) pixel position. Inverse of
/// pixel_to_coord on pixel centers.
inline std::pair<double, double> coord_to_pixel(const Grid& g, Coord c) {
  return {(c.y + 0.5) * static_cast<double>(g.height()) - 0.5,
          (c.x + 0.5) * static_cast<double>(g.width()) - 0.5};
}

inline std::size_t flat_index(const Grid& g, std::size_t i, std::size_t j) {
  check_pixel(g, i, j);
  return i * g.width() + j;
}

inline PixelIndex unflatten(const Grid& g, std::size_t k) {
  if (k >= g.size()) {
    throw RangeError("flat index " + std::to_string(k) + " outside grid " + to_string(g));
  }
  return {k / g.width(), k % g.width()};
}

/// Grayscale raster, row-major.
class Image {
 public:
  explicit Image(Grid grid) : grid_(grid), data_(grid.size(), 0.0) {}

  Image(Grid grid, std::vector<double> data) : grid_(grid), data_(std::move(data)) {
    if (data_.size() != grid_.size()) {
      throw ShapeError("Image: data length " + std::to_string(data_.size()) +
                       " does not match grid " + to_string(grid_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw ArgumentError("Image: non-finite pixel value");
    }
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return data_.size(); }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * grid_.width() + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * grid_.width() + j]; }
  double operator[](std::size_t k) const { return data_[k]; }
  double& operator[](std::size_t k) { return data_[k]; }

 private:
  Grid grid_;
  std::vector<double> data_;
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": grid mismatch " + to_string(a) + " vs " +
                     to_string(b));
  }
}

/// Single-pixel image, used throughout tests and experiments.
inline Image impulse_image(const Grid& g, std::size_t i, std::size_t j, double value = 1.0) {
  Image img(g);
  img[flat_index(g, i, j)] = value;
  return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_grid(a.grid(), b.grid(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double l2_distance(const Image& a, const Image& b) {
  require_same_grid(a.grid(), b.grid(), "l2_distance");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace augmoments
