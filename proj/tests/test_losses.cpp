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

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace am = augmoments;
using am::TransformKind;
using am::testing::random_matrix;
using am::testing::random_vector;

namespace {

am::Matrix random_psd(Eigen::Index d, Eigen::Index rank, am::SplitMix64& rng) {
  const am::Matrix f = random_matrix(d, rank, rng);
  return 0.1 * f * f.transpose();
}

am::AugmentedDataset random_dataset(std::size_t n, Eigen::Index d, Eigen::Index k, am::SplitMix64& rng) {
  am::AugmentedDataset data;
  for (std::size_t i = 0; i < n; ++i) {
    data.records.push_back({random_vector(d, rng), random_psd(d, 3, rng), random_vector(k, rng), std::nullopt});
  }
  return data;
}

am::LinearModel random_model(Eigen::Index k, Eigen::Index d, am::SplitMix64& rng) {
  return {random_matrix(k, d, rng), random_vector(k, rng)};
}

}  // namespace

TEST(ExpectedMse, NoAugmentationLimitIsPlainMse) {
  am::SplitMix64 rng(1);
  auto data = random_dataset(5, 4, 2, rng);
  for (auto& r : data.records) r.variance.setZero();
  const auto m = random_model(2, 4, rng);
  double plain = 0.0;
  for (const auto& r : data.records) plain += (r.target - m.weights * r.mean - m.bias).squaredNorm();
  EXPECT_NEAR(am::expected_mse(m, data), plain, 1e-12 * plain);
  double ysq = 0.0;
  for (const auto& r : data.records) ysq += r.target.squaredNorm();
  EXPECT_NEAR(am::expected_mse(am::LinearModel::zeros(2, 4), data), ysq, 1e-12);
}

TEST(ExpectedMse, HandComputedTrace) {
  am::AugmentedDataset data;
  am::Matrix sigma = am::Matrix::Zero(2, 2);
  sigma(0, 0) = 2;
  sigma(1, 1) = 3;
  data.records.push_back({am::Vector::Zero(2), sigma, am::Vector::Zero(1), std::nullopt});
  am::LinearModel m{am::Matrix::Zero(1, 2), am::Vector::Zero(1)};
  m.weights(0, 0) = 1;
  EXPECT_DOUBLE_EQ(am::expected_mse(m, data), 2.0);
  // the tangent factor path gives the same value
  am::Matrix t = am::Matrix::Zero(2, 2);
  t(0, 0) = std::sqrt(2.0);
  t(1, 1) = std::sqrt(3.0);
  data.records[0].tangent = t;
  EXPECT_NEAR(am::expected_mse(m, data), 2.0, 1e-15);
}

TEST(ExpectedMse, MatchesQuadratureAverageOfPerThetaLoss) {
  am::SplitMix64 rng(2);
  const am::Grid g(2, 3);
  const auto dist = am::ParamDistribution::product(am::Gaussian{0, 0.2}, am::Uniform{-0.3, 0.3});
  const auto q = am::quadrature(dist, 40);
  const auto m = random_model(2, 6, rng);
  am::AugmentedDataset data;
  double avg = 0.0;
  for (std::uint64_t n = 0; n < 4; ++n) {
    const auto img = am::testing::random_image(g, 10 + n);
    const am::Vector y = random_vector(2, rng);
    const auto ms = am::moment_set(TransformKind::Translation, dist, img, q);
    data.records.push_back({ms.mean, ms.variance, y, std::nullopt});
    avg += q.expectation([&](am::Theta t) {
      const am::Vector x = am::to_vector(am::reference_transform(TransformKind::Translation, t, img));
      return (y - m.weights * x - m.bias).squaredNorm();
    });
  }
  EXPECT_NEAR(am::expected_mse(m, data), avg, 1e-9 * avg);
  EXPECT_NEAR(am::expected_mse(m, am::gram_stats(data)), avg, 1e-9 * avg);
}

TEST(ExpectedMse, ValidatesShapes) {
  am::SplitMix64 rng(3);
  auto data = random_dataset(3, 4, 2, rng);
  EXPECT_THROW(am::expected_mse(random_model(2, 5, rng), data), am::ShapeError);
  data.records[1].mean = am::Vector::Zero(3);
  EXPECT_THROW(am::expected_mse(random_model(2, 4, rng), data), am::ShapeError);
  EXPECT_THROW(am::expected_mse(random_model(2, 4, rng), am::AugmentedDataset{}), am::ShapeError);
}

TEST(OptimalLinear, ZeroVarianceIsOrdinaryLeastSquares) {
  am::SplitMix64 rng(4);
  auto data = random_dataset(20, 5, 3, rng);
  for (auto& r : data.records) r.variance.setZero();
  const auto w = am::optimal_linear(data);
  // OLS on the augmented design [x, 1]
  am::Matrix a(20, 6);
  am::Matrix y(20, 3);
  for (Eigen::Index n = 0; n < 20; ++n) {
    a.row(n) << data.records[static_cast<std::size_t>(n)].mean.transpose(), 1.0;
    y.row(n) = data.records[static_cast<std::size_t>(n)].target.transpose();
  }
  const am::Matrix beta = a.colPivHouseholderQr().solve(y);
  EXPECT_LE((w.weights - beta.topRows(5).transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((w.bias - beta.row(5).transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(OptimalLinear, ScalarFixedBias) {
  am::AugmentedDataset data;
  data.records.push_back({am::Vector::Constant(1, 2.0), am::Matrix::Constant(1, 1, 0.5), am::Vector::Constant(1, 3.0),
                          std::nullopt});
  const auto w = am::optimal_linear(data, am::Vector::Zero(1));
  EXPECT_NEAR(w.weights(0, 0), 3.0 * 2.0 / (4.0 + 0.5), 1e-15);
  EXPECT_EQ(w.bias[0], 0.0);
}

TEST(OptimalLinear, FirstOrderOptimality) {
  am::SplitMix64 rng(5);
  const auto data = random_dataset(8, 5, 3, rng);
  const auto res = am::optimal_linear_detailed(data);
  const auto& w = res.model;
  EXPECT_FALSE(res.jittered);
  EXPECT_GT(res.condition, 1.0);
  const auto g = am::expected_mse_gradient(w, data);
  const double gn = std::sqrt(g.weights.squaredNorm() + g.bias.squaredNorm());
  EXPECT_LE(gn, 1e-8 * (1.0 + w.weights.norm()));
  const double best = am::expected_mse(w, data);
  for (int t = 0; t < 100; ++t) {
    am::Matrix dw = random_matrix(3, 5, rng);
    dw *= 1e-3 / dw.norm();
    const am::LinearModel p{w.weights + dw, w.bias};
    EXPECT_GE(am::expected_mse(p, data), best);
  }
  // fixed-bias mode is optimal in W for that bias
  const am::Vector b = random_vector(3, rng);
  const auto wf = am::optimal_linear(data, b);
  const auto gf = am::expected_mse_gradient(wf, data);
  EXPECT_LE(gf.weights.norm(), 1e-8 * (1.0 + wf.weights.norm()));
}

TEST(OptimalLinear, SingularGramIsJitteredOrReported) {
  am::AugmentedDataset data;
  // every input lies on the first axis, second pixel never varies
  for (int n = 0; n < 4; ++n) {
    am::Vector x = am::Vector::Zero(2);
    x[0] = n;
    data.records.push_back({x, am::Matrix::Zero(2, 2), am::Vector::Constant(1, 2.0 * n), std::nullopt});
  }
  const auto res = am::optimal_linear_detailed(data);
  EXPECT_TRUE(res.jittered);
  EXPECT_NEAR(res.model.weights(0, 0), 2.0, 1e-6);
}

TEST(ExpectedMseGradient, MatchesFiniteDifferences) {
  am::SplitMix64 rng(6);
  const auto data = random_dataset(4, 3, 2, rng);
  const auto m = random_model(2, 3, rng);
  const auto g = am::expected_mse_gradient(m, data);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 2; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      auto p = m;
      auto q = m;
      p.weights(i, j) += h;
      q.weights(i, j) -= h;
      const double fd = (am::expected_mse(p, data) - am::expected_mse(q, data)) / (2 * h);
      EXPECT_NEAR(g.weights(i, j), fd, 1e-6 * (1 + std::abs(fd)));
    }
    auto p = m;
    auto q = m;
    p.bias[i] += h;
    q.bias[i] -= h;
    EXPECT_NEAR(g.bias[i], (am::expected_mse(p, data) - am::expected_mse(q, data)) / (2 * h), 1e-5);
  }
}

TEST(MseGradAtMean, Examples) {
  am::SplitMix64 rng(7);
  const auto m = random_model(3, 4, rng);
  const am::Vector mu = random_vector(4, rng);
  const am::Vector y = m.weights * mu + m.bias;
  EXPECT_LE(am::mse_grad_at_mean(m, mu, y).cwiseAbs().maxCoeff(), 1e-14);
  const am::LinearModel id{am::Matrix::Identity(3, 3), am::Vector::Zero(3)};
  am::Vector e1 = am::Vector::Zero(3);
  e1[0] = 1;
  EXPECT_EQ(am::mse_grad_at_mean(id, e1, am::Vector::Zero(3)), 2.0 * e1);
  // central finite differences
  const am::Vector t = random_vector(3, rng);
  const am::Vector g = am::mse_grad_at_mean(m, mu, t);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < 4; ++j) {
    am::Vector a = mu;
    am::Vector b = mu;
    a[j] += h;
    b[j] -= h;
    const double fd = ((t - m.weights * a - m.bias).squaredNorm() - (t - m.weights * b - m.bias).squaredNorm()) / (2 * h);
    EXPECT_NEAR(g[j], fd, 1e-6 * (1 + std::abs(fd)));
  }
}

TEST(DeltaVariance, Examples) {
  EXPECT_EQ(am::delta_variance(am::Vector::Ones(3), am::Matrix::Zero(3, 3)), 0.0);
  am::Matrix s = am::Matrix::Zero(2, 2);
  s(0, 0) = 5;
  s(1, 1) = 1;
  am::Vector e1 = am::Vector::Zero(2);
  e1[0] = 1;
  EXPECT_EQ(am::delta_variance(e1, s), 5.0);
  EXPECT_THROW(am::delta_variance(e1, am::Matrix::Zero(3, 3)), am::ShapeError);
  EXPECT_THROW(am::delta_variance(e1, -s), am::NumericalError);
}

TEST(DeltaVariance, MatchesTaylorSurrogateVariance) {
  // loss variance of the first-order part of the Taylor surrogate is exactly
  // g^T Sigma g; the second-order part adds a small remainder
  am::SplitMix64 rng(8);
  const am::Grid g(2, 3);
  const auto img = am::testing::random_image(g, 3);
  const auto dist = am::ParamDistribution::product(am::Gaussian{0, 0.05}, am::Gaussian{0, 0.05});
  const auto q = am::quadrature(dist, 129);
  const auto ms = am::moment_set(TransformKind::Translation, dist, img, q);
  const auto m = random_model(2, 6, rng);
  const am::Vector y = m.weights * ms.mean + m.bias + 5.0 * random_vector(2, rng);
  const am::Vector grad = am::mse_grad_at_mean(m, ms.mean, y);
  const am::Matrix h = 2.0 * m.weights.transpose() * m.weights;
  const double l0 = (y - m.weights * ms.mean - m.bias).squaredNorm();
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& node : q.nodes) {
    const am::Vector d = am::to_vector(am::reference_transform(TransformKind::Translation, node.theta, img)) - ms.mean;
    const double l = l0 + grad.dot(d) + 0.5 * d.dot(h * d);
    s1 += node.weight * l;
    s2 += node.weight * l * l;
  }
  const double var = s2 - s1 * s1;
  EXPECT_NEAR(am::delta_variance(grad, ms.variance), var, 0.05 * var);
}

TEST(VarianceBound, Examples) {
  am::SplitMix64 rng(9);
  const am::Matrix j = random_matrix(2, 5, rng);
  const am::Matrix t = random_matrix(5, 3, rng);
  EXPECT_EQ(am::variance_bound(am::Vector::Zero(2), j, t), 0.0);
  // Jacobian kernel containing the tangent space
  const am::Matrix qf = t.householderQr().householderQ() * am::Matrix::Identity(5, 3);
  EXPECT_LE(am::variance_bound(random_vector(2, rng), am::remove_tangent_directions(j, qf), t), 1e-24);
  EXPECT_THROW(am::variance_bound(am::Vector::Zero(3), j, t), am::ShapeError);
}

TEST(VarianceBound, DominatesDeltaVariance) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    am::SplitMix64 rng(1000 + seed);
    const Eigen::Index d = 6;
    const Eigen::Index k = 3;
    const auto m = random_model(k, d, rng);
    const am::Matrix t = random_matrix(d, 2, rng);
    const am::Vector mu = random_vector(d, rng);
    const am::Vector y = random_vector(k, rng);
    const am::Vector g_out = -2.0 * (y - m.weights * mu - m.bias);
    const am::Vector grad = am::mse_grad_at_mean(m, mu, y);
    const double dv = am::delta_variance(grad, t * t.transpose());
    const double vb = am::variance_bound(g_out, m.weights, t);
    EXPECT_LE(dv, vb + 1e-10);
    EXPECT_LE(dv * dv, am::squared_variance_bound(g_out, m.weights, t) * (1 + 1e-12) + 1e-10);
  }
}

TEST(TaylorExpectedLoss, Examples) {
  am::SplitMix64 rng(10);
  EXPECT_EQ(am::taylor_expected_loss(1.5, random_matrix(3, 3, rng), am::Matrix::Zero(3, 3)), 1.5);
  am::Matrix s = am::Matrix::Zero(3, 3);
  s.diagonal() << 1, 2, 3;
  EXPECT_DOUBLE_EQ(am::taylor_expected_loss(0.0, am::Matrix::Identity(3, 3), s), 3.0);
  // exact for the linear MSE
  auto data = random_dataset(1, 5, 2, rng);
  const auto m = random_model(2, 5, rng);
  const auto& r = data.records[0];
  const double l0 = (r.target - m.weights * r.mean - m.bias).squaredNorm();
  const double taylor = am::taylor_expected_loss(l0, 2.0 * m.weights.transpose() * m.weights, r.variance);
  const double exact = am::expected_mse(m, data);
  EXPECT_NEAR(taylor, exact, 1e-10 * exact);
}

TEST(TangentPropBound, LinearMseChain) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    am::SplitMix64 rng(500 + seed);
    const auto m = random_model(3, 6, rng);
    const am::Matrix t = random_matrix(6, 2, rng);
    const am::Vector mu = random_vector(6, rng);
    const am::Vector y = random_vector(3, rng);
    const double l0 = (y - m.weights * mu - m.bias).squaredNorm();
    const auto b = am::tangentprop_bound(l0, 2.0 * am::Matrix::Identity(3, 3), m.weights, t);
    EXPECT_NEAR(b.kappa, 1.0, 1e-14);
    EXPECT_NEAR(b.value, l0 + (m.weights * t).squaredNorm(), 1e-10 * b.value);
    const double taylor = am::taylor_expected_loss(l0, 2.0 * m.weights.transpose() * m.weights, t * t.transpose());
    EXPECT_GE(b.value, taylor - 1e-10 * taylor);
  }
  const auto z = am::tangentprop_bound(0.7, -am::Matrix::Identity(2, 2), am::Matrix::Ones(2, 3), am::Matrix::Zero(3, 1));
  EXPECT_EQ(z.value, 0.7);
  EXPECT_GE(z.kappa, 0.0);
}

TEST(Alignment, TangentContributionVanishes) {
  am::SplitMix64 rng(12);
  const am::Grid g(6, 6);
  const auto dist = am::ParamDistribution::gaussian(0, 0.2);
  const auto img = am::synth_image(g, 3, 0.5);
  const auto ms = am::moment_set(TransformKind::Rotation, dist, img, am::quadrature(dist, 33));
  const auto f = am::eig_sym(ms.variance);
  const std::size_t r = std::min<std::size_t>(4, f.rank);
  const am::Matrix qr = f.eigenvectors.leftCols(static_cast<Eigen::Index>(r));
  const am::Matrix w = am::remove_tangent_directions(random_matrix(3, 36, rng), qr);
  const am::Vector grad = am::mse_grad_at_mean({w, am::Vector::Zero(3)}, ms.mean, random_vector(3, rng));
  const am::Vector proj = qr.transpose() * grad;
  const double contribution = proj.dot(f.eigenvalues.head(static_cast<Eigen::Index>(r)).asDiagonal() * proj);
  EXPECT_LE(contribution, 1e-10);
}
