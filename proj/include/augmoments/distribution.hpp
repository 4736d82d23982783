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
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "augmoments/core.hpp"
#include "augmoments/detail/gauss_legendre.hpp"
#include "augmoments/random.hpp"
#include "augmoments/transform.hpp"

namespace augmoments {

/// Gaussians are truncated to mean +/- kGaussianCutoff * std and renormalized
/// (dropped tail mass ~2e-9). Density, quadrature, sampling and the analytic
/// kernels all use the same truncated law.
inline constexpr double kGaussianCutoff = 6.0;

struct Gaussian {
  double mean = 0.0;
  double std = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
struct Dirac {
  double at = 0.0;
};

using ScalarDistribution = std::variant<Gaussian, Uniform, Dirac>;

namespace detail {

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double gaussian_mass() {
  return std_normal_cdf(kGaussianCutoff) - std_normal_cdf(-kGaussianCutoff);
}

inline void validate(const ScalarDistribution& d) {
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    if (!std::isfinite(g->mean) || !std::isfinite(g->std) || !(g->std > 0.0)) {
      throw ArgumentError("gauss: std must be > 0 and parameters finite");
    }
  } else if (const auto* u = std::get_if<Uniform>(&d)) {
    if (!std::isfinite(u->lo) || !std::isfinite(u->hi) || !(u->lo < u->hi)) {
      throw ArgumentError("unif: requires finite lo < hi");
    }
  } else if (!std::isfinite(std::get<Dirac>(d).at)) {
    throw ArgumentError("dirac: location must be finite");
  }
}

}  // namespace detail

inline bool is_dirac(const ScalarDistribution& d) { return std::holds_alternative<Dirac>(d); }

/// Closed interval carrying all the mass.
inline std::pair<double, double> support(const ScalarDistribution& d) {
  return std::visit(
      [](const auto& s) -> std::pair<double, double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return {s.mean - kGaussianCutoff * s.std, s.mean + kGaussianCutoff * s.std};
        } else if constexpr (std::is_same_v<T, Uniform>) {
          return {s.lo, s.hi};
        } else {
          return {s.at, s.at};
        }
      },
      d);
}

inline double density(const ScalarDistribution& d, double theta) {
  return std::visit(
      [theta](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          const double z = (theta - s.mean) / s.std;
          if (std::abs(z) > kGaussianCutoff) return 0.0;
          return detail::std_normal_pdf(z) / (s.std * detail::gaussian_mass());
        } else if constexpr (std::is_same_v<T, Uniform>) {
          return (theta >= s.lo && theta <= s.hi) ? 1.0 / (s.hi - s.lo) : 0.0;
        } else {
          throw UnsupportedError("density: a Dirac distribution has no density function");
          return 0.0;
        }
      },
      d);
}

/// Integrals of theta^m p(theta) over [a, b] for m = 0, 1, 2. Dirac mass is
/// counted when a <= at < b.
inline std::array<double, 3> interval_moments(const ScalarDistribution& d, double a, double b) {
  std::array<double, 3> m{0.0, 0.0, 0.0};
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    const double lo = std::max(a, g->mean - kGaussianCutoff * g->std);
    const double hi = std::min(b, g->mean + kGaussianCutoff * g->std);
    if (!(hi > lo)) return m;
    const double za = (lo - g->mean) / g->std;
    const double zb = (hi - g->mean) / g->std;
    const double z = detail::gaussian_mass();
    const double phi_a = detail::std_normal_pdf(za);
    const double phi_b = detail::std_normal_pdf(zb);
    // Cdf difference taken from the nearer tail to keep relative accuracy.
    const double dcdf = (za > 0.0) ? (0.5 * std::erfc(za / std::numbers::sqrt2) -
                                      0.5 * std::erfc(zb / std::numbers::sqrt2))
                                   : (detail::std_normal_cdf(zb) - detail::std_normal_cdf(za));
    const double e0 = dcdf;
    const double e1 = phi_a - phi_b;                       // int z phi
    const double e2 = dcdf + za * phi_a - zb * phi_b;      // int z^2 phi
    const double mu = g->mean;
    const double s = g->std;
    m[0] = e0 / z;
    m[1] = (mu * e0 + s * e1) / z;
    m[2] = (mu * mu * e0 + 2.0 * mu * s * e1 + s * s * e2) / z;
  } else if (const auto* u = std::get_if<Uniform>(&d)) {
    const double lo = std::max(a, u->lo);
    const double hi = std::min(b, u->hi);
    if (!(hi > lo)) return m;
    const double inv = 1.0 / (u->hi - u->lo);
    m[0] = (hi - lo) * inv;
    m[1] = 0.5 * (hi - lo) * (hi + lo) * inv;
    m[2] = (hi - lo) * (hi * hi + hi * lo + lo * lo) / 3.0 * inv;
  } else {
    const double at = std::get<Dirac>(d).at;
    if (at >= a && at < b) m = {1.0, at, at * at};
  }
  return m;
}

inline double mean(const ScalarDistribution& d) {
  if (const auto* g = std::get_if<Gaussian>(&d)) return g->mean;
  if (const auto* u = std::get_if<Uniform>(&d)) return 0.5 * (u->lo + u->hi);
  return std::get<Dirac>(d).at;
}

inline double variance(const ScalarDistribution& d) {
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    const double c = kGaussianCutoff;
    return g->std * g->std * (1.0 - 2.0 * c * detail::std_normal_pdf(c) / detail::gaussian_mass());
  }
  if (const auto* u = std::get_if<Uniform>(&d)) return (u->hi - u->lo) * (u->hi - u->lo) / 12.0;
  return 0.0;
}

inline double sample(const ScalarDistribution& d, SplitMix64& rng) {
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    double z = rng.normal();
    while (std::abs(z) > kGaussianCutoff) z = rng.normal();
    return g->mean + g->std * z;
  }
  if (const auto* u = std::get_if<Uniform>(&d)) return u->lo + (u->hi - u->lo) * rng.uniform();
  return std::get<Dirac>(d).at;
}

inline ScalarDistribution scaled(const ScalarDistribution& d, double f) {
  if (const auto* g = std::get_if<Gaussian>(&d)) return Gaussian{g->mean * f, g->std * std::abs(f)};
  if (const auto* u = std::get_if<Uniform>(&d)) {
    const double a = u->lo * f;
    const double b = u->hi * f;
    return Uniform{std::min(a, b), std::max(a, b)};
  }
  return Dirac{std::get<Dirac>(d).at * f};
}

std::string to_literal(const ScalarDistribution& d);

/// Law of the transform parameter: a scalar distribution, or the product of
/// two independent scalars for two-parameter transforms.
class ParamDistribution {
 public:
  ParamDistribution(ScalarDistribution d) : first_(d) { detail::validate(d); }  // NOLINT

  static ParamDistribution gaussian(double mean, double std) { return {Gaussian{mean, std}}; }
  static ParamDistribution uniform(double lo, double hi) { return {Uniform{lo, hi}}; }
  static ParamDistribution dirac(double at) { return {Dirac{at}}; }
  static ParamDistribution product(ScalarDistribution a, ScalarDistribution b) {
    ParamDistribution p(a);
    detail::validate(b);
    p.second_ = b;
    return p;
  }

  std::size_t arity() const { return second_ ? 2 : 1; }
  bool is_product() const { return second_.has_value(); }
  const ScalarDistribution& first() const { return first_; }
  const ScalarDistribution& second() const {
    if (!second_) throw ArgumentError("distribution has no second component");
    return *second_;
  }
  bool is_dirac() const { return augmoments::is_dirac(first_) && (!second_ || augmoments::is_dirac(*second_)); }

  ParamDistribution scaled(double f) const {
    ParamDistribution p(augmoments::scaled(first_, f));
    if (second_) p.second_ = augmoments::scaled(*second_, f);
    return p;
  }

  std::string literal() const {
    if (!second_) return to_literal(first_);
    return "prod(" + to_literal(first_) + "," + to_literal(*second_) + ")";
  }

 private:
  ScalarDistribution first_;
  std::optional<ScalarDistribution> second_;
};

inline void require_arity(TransformKind kind, const ParamDistribution& dist) {
  if (arity(kind) != dist.arity()) {
    throw ArgumentError(std::string(name(kind)) + " takes " + std::to_string(arity(kind)) +
                        " parameter(s) but the distribution has arity " +
                        std::to_string(dist.arity()));
  }
}

inline double density(const ParamDistribution& dist, Theta theta) {
  double p = density(dist.first(), theta.first);
  if (dist.is_product()) p *= density(dist.second(), theta.second);
  return p;
}

inline Theta sample(const ParamDistribution& dist, SplitMix64& rng) {
  Theta t;
  t.first = sample(dist.first(), rng);
  if (dist.is_product()) t.second = sample(dist.second(), rng);
  return t;
}

struct QuadratureNode {
  Theta theta;
  double weight = 0.0;
};

/// Nodes and weights approximating E[g(theta)] = sum_k weight_k g(theta_k).
/// Weights already include the density and sum to one.
struct QuadratureRule {
  std::vector<QuadratureNode> nodes;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  double expectation(F&& g) const {
    double s = 0.0;
    for (const auto& n : nodes) s += n.weight * g(n.theta);
    return s;
  }
};

namespace detail {

struct Rule1D {
  std::vector<double> theta;
  std::vector<double> weight;
};

inline void normalize(Rule1D& r) {
  double s = 0.0;
  for (double w : r.weight) s += w;
  if (!(s > 0.0)) throw NumericalError("quadrature: weights sum to zero");
  for (double& w : r.weight) w /= s;
}

// Composite Gauss-Legendre over the sorted panel edges.
inline Rule1D composite_rule(const ScalarDistribution& d, const std::vector<double>& edges,
                             std::size_t per_panel) {
  Rule1D r;
  const GaussLegendre gl = gauss_legendre(per_panel);
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double a = edges[p];
    const double b = edges[p + 1];
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    for (std::size_t k = 0; k < per_panel; ++k) {
      const double t = mid + half * gl.nodes[k];
      r.theta.push_back(t);
      r.weight.push_back(gl.weights[k] * half * density(d, t));
    }
  }
  normalize(r);
  return r;
}

inline Rule1D scalar_rule(const ScalarDistribution& d, std::size_t n) {
  if (is_dirac(d)) return {{std::get<Dirac>(d).at}, {1.0}};
  const auto [a, b] = support(d);
  return composite_rule(d, {a, b}, n);
}

inline QuadratureRule tensor(const Rule1D& a, const std::optional<Rule1D>& b) {
  QuadratureRule q;
  if (!b) {
    q.nodes.reserve(a.theta.size());
    for (std::size_t i = 0; i < a.theta.size(); ++i) q.nodes.push_back({{a.theta[i], 0.0}, a.weight[i]});
    return q;
  }
  q.nodes.reserve(a.theta.size() * b->theta.size());
  for (std::size_t i = 0; i < a.theta.size(); ++i) {
    for (std::size_t j = 0; j < b->theta.size(); ++j) {
      q.nodes.push_back({{a.theta[i], b->theta[j]}, a.weight[i] * b->weight[j]});
    }
  }
  return q;
}

}  // namespace detail

/// Gauss-Legendre rule with n_nodes per axis on the support; tensor product
/// for product distributions; a single unit node for Dirac components.
inline QuadratureRule quadrature(const ParamDistribution& dist, std::size_t n_nodes) {
  if (n_nodes == 0) throw ArgumentError("quadrature: n_nodes must be >= 1");
  std::optional<detail::Rule1D> second;
  if (dist.is_product()) second = detail::scalar_rule(dist.second(), n_nodes);
  return detail::tensor(detail::scalar_rule(dist.first(), n_nodes), second);
}

namespace detail {

// Parameter values at which some pixel's bilinear source position crosses a
// pixel center along the given parameter axis. Between consecutive values
// every entry of M(theta) is smooth in theta.
inline std::vector<double> kink_parameters(TransformKind kind, std::size_t axis, const Grid& g,
                                           double lo, double hi) {
  std::vector<double> out;
  auto integer_multiples = [&](double scale) {
    // theta * scale integer, theta in (lo, hi)
    if (scale == 0.0) return;
    const double a = std::min(lo * scale, hi * scale);
    const double b = std::max(lo * scale, hi * scale);
    for (double k = std::ceil(a); k <= b; k += 1.0) {
      const double t = k / scale;
      if (t > lo && t < hi) out.push_back(t);
    }
  };
  const double h = static_cast<double>(g.height());
  const double w = static_cast<double>(g.width());
  const bool horizontal_axis =
      kind == TransformKind::ShearHorizontal || (kind == TransformKind::Shear && axis == 0);
  const bool vertical_axis =
      kind == TransformKind::ShearVertical || (kind == TransformKind::Shear && axis == 1);
  if (kind == TransformKind::Translation) {
    integer_multiples(axis == 0 ? w : h);
  } else if (horizontal_axis) {
    // column shift theta * v * width, v the row coordinate
    for (std::size_t i = 0; i < g.height(); ++i) {
      integer_multiples(((static_cast<double>(i) + 0.5) / h - 0.5) * w);
    }
  } else if (vertical_axis) {
    for (std::size_t j = 0; j < g.width(); ++j) {
      integer_multiples(((static_cast<double>(j) + 0.5) / w - 0.5) * h);
    }
  }
  return out;
}

inline Rule1D aligned_scalar_rule(TransformKind kind, std::size_t axis, const ScalarDistribution& d,
                                  const Grid& g, std::size_t n_nodes, std::size_t per_panel) {
  if (is_dirac(d)) return {{std::get<Dirac>(d).at}, {1.0}};
  const auto [a, b] = support(d);
  const std::size_t base = std::max<std::size_t>(1, (n_nodes + per_panel - 1) / per_panel);
  std::vector<double> edges;
  for (std::size_t p = 0; p <= base; ++p) {
    edges.push_back(a + (b - a) * static_cast<double>(p) / static_cast<double>(base));
  }
  edges.back() = b;
  const auto kinks = kink_parameters(kind, axis, g, a, b);
  edges.insert(edges.end(), kinks.begin(), kinks.end());
  std::sort(edges.begin(), edges.end());
  const double tol = 1e-12 * (b - a);
  std::vector<double> unique;
  for (double e : edges) {
    if (unique.empty() || e - unique.back() > tol) unique.push_back(e);
  }
  unique.back() = b;
  return composite_rule(d, unique, per_panel);
}

}  // namespace detail

/// Composite Gauss-Legendre rule whose panel edges include every parameter
/// value where a bilinear weight of M(theta) has a kink (translation and
/// shear; rotation and zoom get uniform panels). Each panel gets
/// `per_panel` nodes, and the support is first split into
/// ceil(n_nodes / per_panel) equal panels so the density stays resolved.
/// Because the integrand is smooth on every panel, this converges
/// geometrically where the plain rule of the same size stalls at the kinks.
inline QuadratureRule aligned_quadrature(TransformKind kind, const ParamDistribution& dist,
                                         const Grid& g, std::size_t n_nodes,
                                         std::size_t per_panel = 4) {
  if (n_nodes == 0 || per_panel == 0) throw ArgumentError("aligned_quadrature: node counts must be >= 1");
  require_arity(kind, dist);
  std::optional<detail::Rule1D> second;
  if (dist.is_product()) {
    second = detail::aligned_scalar_rule(kind, 1, dist.second(), g, n_nodes, per_panel);
  }
  return detail::tensor(detail::aligned_scalar_rule(kind, 0, dist.first(), g, n_nodes, per_panel),
                        second);
}

/// Node count of aligned_quadrature without building the tensor product.
inline std::size_t aligned_quadrature_size(TransformKind kind, const ParamDistribution& dist, const Grid& g,
                                           std::size_t n_nodes, std::size_t per_panel = 4) {
  if (n_nodes == 0 || per_panel == 0) throw ArgumentError("aligned_quadrature: node counts must be >= 1");
  require_arity(kind, dist);
  std::size_t n = detail::aligned_scalar_rule(kind, 0, dist.first(), g, n_nodes, per_panel).theta.size();
  if (dist.is_product()) n *= detail::aligned_scalar_rule(kind, 1, dist.second(), g, n_nodes, per_panel).theta.size();
  return n;
}

// ---------------------------------------------------------------------------
// Literal syntax: gauss(mu,sigma) | unif(lo,hi) | dirac(v) | prod(a,b)

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_literal(const ScalarDistribution& d) {
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    return "gauss(" + format_number(g->mean) + "," + format_number(g->std) + ")";
  }
  if (const auto* u = std::get_if<Uniform>(&d)) {
    return "unif(" + format_number(u->lo) + "," + format_number(u->hi) + ")";
  }
  return "dirac(" + format_number(std::get<Dirac>(d).at) + ")";
}

namespace detail {

class LiteralParser {
 public:
  explicit LiteralParser(std::string_view s) : s_(s) {}

  ParamDistribution parse() {
    skip();
    const std::string head = ident();
    ParamDistribution out = ParamDistribution::dirac(0.0);
    if (head == "prod") {
      expect('(');
      ScalarDistribution a = scalar(ident());
      expect(',');
      ScalarDistribution b = scalar(ident());
      expect(')');
      out = ParamDistribution::product(a, b);
    } else {
      out = ParamDistribution(scalar(head));
    }
    skip();
    if (pos_ != s_.size()) fail("trailing characters");
    return out;
  }

 private:
  ScalarDistribution scalar(const std::string& head) {
    expect('(');
    if (head == "dirac") {
      const double v = number();
      expect(')');
      return Dirac{v};
    }
    const double a = number();
    expect(',');
    const double b = number();
    expect(')');
    ScalarDistribution d;
    if (head == "gauss") {
      d = Gaussian{a, b};
    } else if (head == "unif") {
      d = Uniform{a, b};
    } else {
      fail("unknown distribution '" + head + "'");
    }
    detail::validate(d);
    return d;
  }

  std::string ident() {
    skip();
    std::string out;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) out += s_[pos_++];
    if (out.empty()) fail("expected a distribution name");
    return out;
  }

  double number() {
    skip();
    const std::string rest(s_.substr(pos_));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      fail("expected a number");
    }
    pos_ += used;
    return v;
  }

  void expect(char c) {
    skip();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ArgumentError("distribution literal '" + std::string(s_) + "': " + what + " at offset " +
                        std::to_string(pos_));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ParamDistribution parse_distribution(std::string_view literal) {
  return detail::LiteralParser(literal).parse();
}

}  // namespace augmoments
