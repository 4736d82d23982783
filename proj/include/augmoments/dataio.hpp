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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augmoments/core.hpp"
#include "augmoments/random.hpp"

namespace augmoments {

static_assert(std::endian::native == std::endian::little, "AMTF writer assumes a little-endian host");

namespace detail {

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

template <class T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <class T>
void append_le(std::vector<unsigned char>& buf, T v) {
  unsigned char b[sizeof v];
  std::memcpy(b, &v, sizeof v);
  buf.insert(buf.end(), b, b + sizeof v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

inline Image read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> void {
    throw FormatError("PGM '" + path.string() + "': " + what);
  };
  if (bytes.size() < 2 || bytes[0] != 'P') fail("bad magic");
  if (bytes[1] == '2') fail("ASCII P2 is not supported, convert to binary P5");
  if (bytes[1] != '5') fail("bad magic, expected P5");
  pos = 2;
  auto next_field = [&]() -> long {
    // whitespace and '#' comments between header fields
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (++digits > 9) fail("header field too large");
    }
    if (digits == 0) fail("truncated header");
    return v;
  };
  const long width = next_field();
  const long height = next_field();
  const long maxval = next_field();
  if (width <= 0 || height <= 0) fail("non-positive size");
  if (maxval != 255) fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("truncated header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < n) fail("truncated pixel data");
  std::vector<double> data(n);
  for (std::size_t k = 0; k < n; ++k) data[k] = bytes[pos + k] / 255.0;
  return Image(Grid(static_cast<std::size_t>(height), static_cast<std::size_t>(width)), std::move(data));
}

/// Writes P5; values are clamped to [0, 1] and rounded to 1/255 steps.
inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  const std::string header = "P5\n" + std::to_string(img.grid().width()) + " " +
                             std::to_string(img.grid().height()) + "\n255\n";
  std::vector<unsigned char> buf(header.begin(), header.end());
  buf.reserve(buf.size() + img.size());
  for (double v : img.data()) {
    buf.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  detail::write_all(path, buf.data(), buf.size());
}

/// Affine rescale to [0, 1] for display (constant images map to 0).
inline Image normalize_for_display(const Image& img) {
  const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
  Image out(img.grid());
  const double span = *hi - *lo;
  for (std::size_t k = 0; k < img.size(); ++k) out[k] = span > 0.0 ? (img[k] - *lo) / span : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// MNIST IDX

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int classes = 10;

  std::size_t size() const { return images.size(); }

  /// N x K one-hot targets.
  Eigen::MatrixXd one_hot() const {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t n = 0; n < labels.size(); ++n) y(static_cast<Eigen::Index>(n), labels[n]) = 1.0;
    return y;
  }

  LabeledDataset slice(std::size_t begin, std::size_t count) const {
    if (begin + count > size()) throw RangeError("LabeledDataset::slice out of range");
    LabeledDataset out;
    out.classes = classes;
    out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin),
                      images.begin() + static_cast<std::ptrdiff_t>(begin + count));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
  }
};

/// Reads an IDX image file (magic 0x00000803, u8, N x rows x cols) and label
/// file (0x00000801, u8, N). Pixels scale to [0, 1].
inline LabeledDataset read_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path, int classes = 10) {
  const auto img = detail::read_all(images_path);
  const auto lab = detail::read_all(labels_path);
  if (img.size() < 16) throw FormatError("IDX images '" + images_path.string() + "': truncated header");
  if (lab.size() < 8) throw FormatError("IDX labels '" + labels_path.string() + "': truncated header");
  if (detail::read_be32(img.data()) != 0x00000803U) {
    throw FormatError("IDX images '" + images_path.string() + "': bad magic");
  }
  if (detail::read_be32(lab.data()) != 0x00000801U) {
    throw FormatError("IDX labels '" + labels_path.string() + "': bad magic");
  }
  const std::size_t n = detail::read_be32(img.data() + 4);
  const std::size_t rows = detail::read_be32(img.data() + 8);
  const std::size_t cols = detail::read_be32(img.data() + 12);
  const std::size_t n_labels = detail::read_be32(lab.data() + 4);
  if (n != n_labels) {
    throw FormatError("IDX: image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
  }
  if (rows == 0 || cols == 0) throw FormatError("IDX images: zero-sized images");
  if (img.size() - 16 < n * rows * cols) throw FormatError("IDX images: truncated pixel data");
  if (lab.size() - 8 < n) throw FormatError("IDX labels: truncated label data");
  LabeledDataset ds;
  ds.classes = classes;
  const Grid g(rows, cols);
  ds.images.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> px(rows * cols);
    const unsigned char* src = img.data() + 16 + k * rows * cols;
    for (std::size_t p = 0; p < px.size(); ++p) px[p] = src[p] / 255.0;
    ds.images.emplace_back(g, std::move(px));
    const int label = lab[8 + k];
    if (label >= classes) throw FormatError("IDX labels: label " + std::to_string(label) + " >= class count");
    ds.labels.push_back(label);
  }
  return ds;
}

/// Writes IDX files; pixels are quantized to u8.
inline void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                      const LabeledDataset& ds) {
  if (ds.images.size() != ds.labels.size()) throw ShapeError("write_idx: image/label count mismatch");
  auto be32 = [](std::vector<unsigned char>& b, std::uint32_t v) {
    b.push_back(static_cast<unsigned char>(v >> 24));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v));
  };
  std::vector<unsigned char> ib;
  std::vector<unsigned char> lb;
  const std::size_t rows = ds.images.empty() ? 0 : ds.images[0].grid().height();
  const std::size_t cols = ds.images.empty() ? 0 : ds.images[0].grid().width();
  be32(ib, 0x00000803U);
  be32(ib, static_cast<std::uint32_t>(ds.size()));
  be32(ib, static_cast<std::uint32_t>(rows));
  be32(ib, static_cast<std::uint32_t>(cols));
  be32(lb, 0x00000801U);
  be32(lb, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t k = 0; k < ds.size(); ++k) {
    for (double v : ds.images[k].data()) {
      ib.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
    lb.push_back(static_cast<unsigned char>(ds.labels[k]));
  }
  detail::write_all(images_path, ib.data(), ib.size());
  detail::write_all(labels_path, lb.data(), lb.size());
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

/// Seeded white noise smoothed by a separable binomial kernel of
/// ceil(1 / cutoff) taps (zero padded), then min-max normalized to [0, 1].
inline Image synth_image(const Grid& g, std::uint64_t seed, double cutoff) {
  if (!(cutoff > 0.0 && cutoff <= 1.0)) throw ArgumentError("synth_image: cutoff must be in (0, 1]");
  const auto taps = static_cast<std::size_t>(std::ceil(1.0 / cutoff));
  std::vector<double> kernel(taps, 1.0);
  for (std::size_t n = 1; n < taps; ++n) {
    for (std::size_t k = n; k > 0; --k) kernel[k] += kernel[k - 1];
  }
  double ksum = 0.0;
  for (double v : kernel) ksum += v;
  for (double& v : kernel) v /= ksum;
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);

  SplitMix64 rng(seed);
  const std::size_t h = g.height();
  const std::size_t w = g.width();
  std::vector<double> noise(g.size());
  for (double& v : noise) v = rng.normal();
  auto conv = [&](const std::vector<double>& src, bool horizontal) {
    std::vector<double> dst(src.size(), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < taps; ++t) {
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - half;
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i) + (horizontal ? 0 : off);
          const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j) + (horizontal ? off : 0);
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(h) || jj >= static_cast<std::ptrdiff_t>(w)) continue;
          acc += kernel[t] * src[static_cast<std::size_t>(ii) * w + static_cast<std::size_t>(jj)];
        }
        dst[i * w + j] = acc;
      }
    }
    return dst;
  };
  const auto smooth = conv(conv(noise, true), false);
  const auto [lo, hi] = std::minmax_element(smooth.begin(), smooth.end());
  std::vector<double> out(smooth.size(), 0.0);
  const double span = *hi - *lo;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = span > 0.0 ? (smooth[k] - *lo) / span : 0.0;
  return Image(g, std::move(out));
}

/// Bright square on a dark background with sharp edges; side = fraction of
/// the shorter image side.
inline Image square_image(const Grid& g, double side = 0.5, double value = 1.0) {
  Image img(g);
  const double half = 0.5 * side;
  for (std::size_t i = 0; i < g.height(); ++i) {
    for (std::size_t j = 0; j < g.width(); ++j) {
      const Coord c = pixel_to_coord(g, i, j);
      if (std::abs(c.x) < half && std::abs(c.y) < half) img(i, j) = value;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// AMTF tensors: "AMTF" | u32 version | u32 dtype | u32 ndim | u64 dims[ndim] |
// f64 payload, all little-endian, row-major.

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kTensorDtypeF64 = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

inline std::uint64_t element_count(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

inline void write_tensor(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                         const double* data, std::size_t count) {
  if (element_count(dims) != count) throw ShapeError("write_tensor: product of dims does not match data length");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  std::vector<unsigned char> head{'A', 'M', 'T', 'F'};
  detail::append_le(head, kTensorVersion);
  detail::append_le(head, kTensorDtypeF64);
  detail::append_le(head, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::append_le(head, d);
  out.write(reinterpret_cast<const char*>(head.data()), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline void write_tensor(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                         const std::vector<double>& data) {
  write_tensor(path, dims, data.data(), data.size());
}

/// Row-major write of a matrix as a 2-D tensor.
inline void write_tensor(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_tensor(path, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, rm.data(),
               static_cast<std::size_t>(rm.size()));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_all(path);
  auto fail = [&](std::size_t offset, const std::string& what) -> void {
    throw FormatError("AMTF '" + path.string() + "' at offset " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < 16) fail(0, "truncated header");
  if (std::memcmp(bytes.data(), "AMTF", 4) != 0) fail(0, "bad magic");
  if (detail::read_le<std::uint32_t>(bytes.data() + 4) != kTensorVersion) fail(4, "unsupported version");
  if (detail::read_le<std::uint32_t>(bytes.data() + 8) != kTensorDtypeF64) fail(8, "unsupported dtype");
  const auto ndim = detail::read_le<std::uint32_t>(bytes.data() + 12);
  const std::size_t dims_end = 16 + std::size_t{ndim} * 8;
  if (bytes.size() < dims_end) fail(16, "truncated dims");
  Tensor t;
  for (std::uint32_t k = 0; k < ndim; ++k) t.dims.push_back(detail::read_le<std::uint64_t>(bytes.data() + 16 + 8 * k));
  const std::uint64_t n = element_count(t.dims);
  if (bytes.size() - dims_end != n * 8) fail(dims_end, "payload length does not match dims");
  t.data.resize(n);
  std::memcpy(t.data.data(), bytes.data() + dims_end, n * 8);
  return t;
}

inline Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw ShapeError("tensor_to_matrix: expected a 2-D tensor");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          t.data.data(), static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  return rm;
}

// ---------------------------------------------------------------------------
// CSV: header row, ',' separator, '.' decimal, LF endings.

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  template <class... Fields>
  void row(const Fields&... fields) {
    bool first = true;
    ((emit(fields, first)), ...);
    out_ << '\n';
  }

 private:
  template <class T>
  void emit(const T& v, bool& first) {
    if (!first) out_ << ',';
    first = false;
    if constexpr (std::is_floating_point_v<T>) {
      out_ << csv_number(v);
    } else {
      out_ << v;
    }
  }

  std::ostream& out_;
};

}  // namespace augmoments
