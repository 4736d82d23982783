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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "augmoments/core.hpp"
#include "augmoments/moments.hpp"

namespace augmoments {

/// f(x) = W x + b.
struct LinearModel {
  Matrix weights;  // K x D
  Vector bias;     // K

  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }

  static LinearModel zeros(std::size_t k, std::size_t d) {
    return {Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)),
            Vector::Zero(static_cast<Eigen::Index>(k))};
  }

  Vector predict(const Vector& x) const { return weights * x + bias; }
};

/// Augmented moments of one training sample. `tangent`, when present, is the
/// spectral factor of `variance` and is used for the trace term instead.
struct AugmentedRecord {
  Vector mean;
  Matrix variance;
  Vector target;
  std::optional<Matrix> tangent;
};

struct AugmentedDataset {
  std::vector<AugmentedRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t input_dim() const { return records.empty() ? 0 : static_cast<std::size_t>(records[0].mean.size()); }
  std::size_t output_dim() const { return records.empty() ? 0 : static_cast<std::size_t>(records[0].target.size()); }

  void validate() const {
    if (records.empty()) throw ShapeError("AugmentedDataset: no records");
    const auto d = records[0].mean.size();
    const auto k = records[0].target.size();
    for (const auto& r : records) {
      if (r.mean.size() != d || r.target.size() != k) throw ShapeError("AugmentedDataset: inconsistent D or K");
      const bool has_var = r.variance.size() > 0;
      if (has_var && (r.variance.rows() != d || r.variance.cols() != d)) {
        throw ShapeError("AugmentedDataset: variance must be D x D");
      }
      if (r.tangent && r.tangent->rows() != d) throw ShapeError("AugmentedDataset: tangent must have D rows");
      if (!has_var && !r.tangent) throw ShapeError("AugmentedDataset: record needs a variance or a tangent factor");
    }
  }
};

inline void check_model(const LinearModel& m, std::size_t d, std::size_t k, const char* where) {
  if (m.inputs() != d || m.outputs() != k || static_cast<std::size_t>(m.bias.size()) != k) {
    throw ShapeError(std::string(where) + ": model shape does not match data");
  }
}

/// Tr(W V W^T), through the tangent factor when available.
inline double regularizer(const Matrix& weights, const AugmentedRecord& r) {
  if (r.tangent) return (weights * *r.tangent).squaredNorm();
  return (weights * r.variance).cwiseProduct(weights).sum();
}

/// sum_n ||y_n - W mu_n - b||^2 + Tr(W^T W Sigma_n).
inline double expected_mse(const LinearModel& model, const AugmentedDataset& data) {
  data.validate();
  check_model(model, data.input_dim(), data.output_dim(), "expected_mse");
  double total = 0.0;
  for (const auto& r : data.records) {
    total += (r.target - model.weights * r.mean - model.bias).squaredNorm() + regularizer(model.weights, r);
  }
  return total;
}

/// Sufficient statistics of the expected MSE: everything the closed-form
/// loss, its gradient and the optimal weights need.
struct GramStats {
  std::size_t count = 0;
  Vector sum_mean;       // sum mu_n
  Vector sum_target;     // sum y_n
  double sum_target_sq = 0.0;
  Matrix cross;          // sum y_n mu_n^T            (K x D)
  Matrix gram;           // sum mu_n mu_n^T + V_n     (D x D)
};

inline GramStats gram_stats(const AugmentedDataset& data) {
  data.validate();
  const auto d = static_cast<Eigen::Index>(data.input_dim());
  const auto k = static_cast<Eigen::Index>(data.output_dim());
  GramStats s{data.size(), Vector::Zero(d), Vector::Zero(k), 0.0, Matrix::Zero(k, d), Matrix::Zero(d, d)};
  for (const auto& r : data.records) {
    s.sum_mean += r.mean;
    s.sum_target += r.target;
    s.sum_target_sq += r.target.squaredNorm();
    s.cross += r.target * r.mean.transpose();
    s.gram += r.mean * r.mean.transpose();
    if (r.tangent) {
      s.gram += *r.tangent * r.tangent->transpose();
    } else {
      s.gram += r.variance;
    }
  }
  return s;
}

inline double expected_mse(const LinearModel& m, const GramStats& s) {
  const double n = static_cast<double>(s.count);
  const Matrix adj = s.cross - m.bias * s.sum_mean.transpose();
  return s.sum_target_sq - 2.0 * m.bias.dot(s.sum_target) + n * m.bias.squaredNorm() -
         2.0 * m.weights.cwiseProduct(adj).sum() + (m.weights * s.gram).cwiseProduct(m.weights).sum();
}

struct ModelGradient {
  Matrix weights;
  Vector bias;
};

/// Gradient of the expected MSE with respect to (W, b).
inline ModelGradient expected_mse_gradient(const LinearModel& m, const GramStats& s) {
  const double n = static_cast<double>(s.count);
  ModelGradient g;
  g.weights = 2.0 * (m.weights * s.gram - (s.cross - m.bias * s.sum_mean.transpose()));
  g.bias = -2.0 * (s.sum_target - m.weights * s.sum_mean - n * m.bias);
  return g;
}

inline ModelGradient expected_mse_gradient(const LinearModel& m, const AugmentedDataset& data) {
  check_model(m, data.input_dim(), data.output_dim(), "expected_mse_gradient");
  return expected_mse_gradient(m, gram_stats(data));
}

struct OptimalLinearResult {
  LinearModel model;
  double condition = 0.0;  // reciprocal-condition based estimate of cond(B)
  bool jittered = false;
  double jitter = 0.0;
};

namespace detail {

// Solves X B = A for symmetric positive definite B.
inline Matrix spd_right_solve(const Matrix& a, const Matrix& b, OptimalLinearResult& diag) {
  Eigen::LLT<Matrix> llt(b);
  double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || !(rcond > 1e-15)) {
    const double tr = b.trace();
    diag.jitter = 1e-10 * tr / static_cast<double>(b.rows());
    diag.jittered = true;
    Matrix bj = b;
    bj.diagonal().array() += diag.jitter;
    llt.compute(bj);
    rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (llt.info() != Eigen::Success || !(rcond > 0.0)) {
      throw NumericalError("optimal_linear: regularized Gram matrix is singular (rcond " +
                           std::to_string(rcond) + " after jitter " + std::to_string(diag.jitter) + ")");
    }
  }
  diag.condition = 1.0 / rcond;
  return llt.solve(a.transpose()).transpose();
}

}  // namespace detail

/// Minimizer of the expected MSE. Without `fixed_bias`, W and b are solved
/// jointly by centering:
///   W = [sum (y-ybar)(mu-mubar)^T] [sum (mu-mubar)(mu-mubar)^T + V_n]^{-1},
///   b = ybar - W mubar.
/// With `fixed_bias`, W = [sum (y-b) mu^T][sum mu mu^T + V_n]^{-1}.
inline OptimalLinearResult optimal_linear_detailed(const GramStats& s,
                                                   const std::optional<Vector>& fixed_bias = std::nullopt) {
  OptimalLinearResult res;
  const double n = static_cast<double>(s.count);
  if (fixed_bias) {
    if (fixed_bias->size() != s.sum_target.size()) throw ShapeError("optimal_linear: bias length mismatch");
    const Matrix a = s.cross - *fixed_bias * s.sum_mean.transpose();
    res.model.weights = detail::spd_right_solve(a, s.gram, res);
    res.model.bias = *fixed_bias;
    return res;
  }
  const Vector ybar = s.sum_target / n;
  const Vector mbar = s.sum_mean / n;
  const Matrix a = s.cross - n * ybar * mbar.transpose();
  const Matrix b = s.gram - n * mbar * mbar.transpose();
  res.model.weights = detail::spd_right_solve(a, b, res);
  res.model.bias = ybar - res.model.weights * mbar;
  return res;
}

inline OptimalLinearResult optimal_linear_detailed(const AugmentedDataset& data,
                                                   const std::optional<Vector>& fixed_bias = std::nullopt) {
  return optimal_linear_detailed(gram_stats(data), fixed_bias);
}

inline LinearModel optimal_linear(const AugmentedDataset& data, const std::optional<Vector>& fixed_bias = std::nullopt) {
  return optimal_linear_detailed(data, fixed_bias).model;
}

/// Gradient of ||y - W x - b||^2 with respect to x, at x = mean.
inline Vector mse_grad_at_mean(const LinearModel& model, const Vector& mean, const Vector& target) {
  check_model(model, static_cast<std::size_t>(mean.size()), static_cast<std::size_t>(target.size()),
              "mse_grad_at_mean");
  return -2.0 * model.weights.transpose() * (target - model.weights * mean - model.bias);
}

/// Delta-method loss variance grad^T Sigma grad, on the gradient exactly as
/// supplied. Tiny negative values from round-off are clamped to zero.
inline double delta_variance(const Vector& grad, const Matrix& sigma) {
  if (sigma.rows() != grad.size() || sigma.cols() != grad.size()) {
    throw ShapeError("delta_variance: sigma must be D x D with D = grad length");
  }
  const double v = grad.dot(sigma * grad);
  if (v < 0.0) {
    const double scale = grad.squaredNorm() * std::max(0.0, sigma.trace());
    if (v < -1e-10 * scale) throw NumericalError("delta_variance: sigma is not positive semidefinite");
    return 0.0;
  }
  return v;
}

/// Cauchy-Schwarz bound on the delta-method variance:
///   grad^T Sigma grad = g^T (J T)(J T)^T g <= ||g||^2 ||J T||_F^2,
/// g the loss gradient at the model output, J the model Jacobian and T the
/// tangent factor.
inline double variance_bound(const Vector& grad_out, const Matrix& jac, const Matrix& tangent) {
  if (jac.rows() != grad_out.size() || jac.cols() != tangent.rows()) {
    throw ShapeError("variance_bound: expected grad_out (K), jac (K x D), tangent (D x r)");
  }
  return grad_out.squaredNorm() * (jac * tangent).squaredNorm();
}

/// ||g||^4 ||J T||_F^4, the square of variance_bound. It bounds the squared
/// delta-method variance; it is not a bound on the variance itself when the
/// product is below one.
inline double squared_variance_bound(const Vector& grad_out, const Matrix& jac, const Matrix& tangent) {
  const double b = variance_bound(grad_out, jac, tangent);
  return b * b;
}

/// Second-order Taylor expected loss: loss(mean) + 1/2 Tr(H Sigma).
inline double taylor_expected_loss(double loss_at_mean, const Matrix& hessian, const Matrix& sigma) {
  if (hessian.rows() != hessian.cols() || sigma.rows() != sigma.cols() || hessian.rows() != sigma.rows()) {
    throw ShapeError("taylor_expected_loss: hessian and sigma must be D x D");
  }
  return loss_at_mean + 0.5 * hessian.cwiseProduct(sigma.transpose()).sum();
}

struct TangentPropBound {
  double value = 0.0;
  double kappa = 0.0;
};

/// loss(mean) + kappa ||J T||_F^2 with kappa = lambda_max(H_out) / 2, H_out
/// the loss Hessian at the model output. Dominates the Taylor expected loss
/// whenever H_out is positive semidefinite.
inline TangentPropBound tangentprop_bound(double loss_at_mean, const Matrix& out_hessian, const Matrix& jac,
                                          const Matrix& tangent) {
  if (out_hessian.rows() != out_hessian.cols() || out_hessian.rows() != jac.rows() || jac.cols() != tangent.rows()) {
    throw ShapeError("tangentprop_bound: expected H_out (K x K), jac (K x D), tangent (D x r)");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(out_hessian, Eigen::EigenvaluesOnly);
  const double lmax = out_hessian.rows() ? es.eigenvalues().maxCoeff() : 0.0;
  TangentPropBound b;
  b.kappa = std::max(0.0, 0.5 * lmax);
  b.value = loss_at_mean + b.kappa * (jac * tangent).squaredNorm();
  return b;
}

/// W (I - Q Q^T): rows of W made orthogonal to the columns of Q, so the
/// Jacobian kernel contains span(Q).
inline Matrix remove_tangent_directions(const Matrix& weights, const Matrix& q) {
  return weights - (weights * q) * q.transpose();
}

}  // namespace augmoments
