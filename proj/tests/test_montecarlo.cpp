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

#include <sstream>

#include "test_util.hpp"

namespace am = augmoments;
using am::TransformKind;

namespace {

am::ParamDistribution gauss2(double s) { return am::ParamDistribution::product(am::Gaussian{0, s}, am::Gaussian{0, s}); }

// Two well-separated classes on a 4x4 grid: bright left half vs bright top half.
am::LabeledDataset toy_dataset(std::size_t n, std::uint64_t seed) {
  am::SplitMix64 rng(seed);
  am::LabeledDataset ds;
  ds.classes = 2;
  const am::Grid g(4, 4);
  for (std::size_t k = 0; k < n; ++k) {
    const int label = static_cast<int>(k % 2);
    am::Image img(g);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        const bool on = label == 0 ? j < 2 : i < 2;
        img(i, j) = (on ? 0.8 : 0.1) + 0.1 * rng.uniform();
      }
    }
    ds.images.push_back(img);
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

TEST(McExpectedImage, DiracAndSingleSample) {
  const am::Grid g(8, 8);
  const auto img = am::testing::random_image(g, 1);
  const auto dirac = am::ParamDistribution::product(am::Dirac{0.1}, am::Dirac{-0.2});
  const auto exact = am::reference_transform(TransformKind::Translation, {0.1, -0.2}, img);
  EXPECT_LE(am::max_abs_diff(am::mc_expected_image(TransformKind::Translation, dirac, img, 17, 3), exact), 1e-15);
  const auto dist = gauss2(0.1);
  am::SplitMix64 rng(42);
  const auto one = am::reference_transform(TransformKind::Translation, am::sample(dist, rng), img);
  EXPECT_LE(am::max_abs_diff(am::mc_expected_image(TransformKind::Translation, dist, img, 1, 42), one), 1e-12);
  EXPECT_THROW(am::mc_expected_image(TransformKind::Translation, dist, img, 0, 1), am::ArgumentError);
}

TEST(McExpectedImage, UnbiasedWithinFourStandardErrors) {
  const am::Grid g(16, 16);
  const auto img = am::synth_image(g, 5, 0.25);
  const auto dist = gauss2(0.1);
  const std::size_t n = 100000;
  am::SplitMix64 rng(77);
  am::Vector s1 = am::Vector::Zero(256);
  am::Vector s2 = am::Vector::Zero(256);
  for (std::size_t k = 0; k < n; ++k) {
    const am::Vector t = am::to_vector(am::reference_transform(TransformKind::Translation, am::sample(dist, rng), img));
    s1 += t;
    s2 += t.cwiseProduct(t);
  }
  const am::Vector mean = s1 / double(n);
  EXPECT_LE((am::to_vector(am::mc_expected_image(TransformKind::Translation, dist, img, n, 77)) - mean).lpNorm<Eigen::Infinity>(),
            1e-12);
  const am::Vector se = ((s2 / double(n) - mean.cwiseProduct(mean)) / double(n)).cwiseMax(0.0).cwiseSqrt();
  const am::Vector exact = am::to_vector(am::translation_expected_analytic(img, dist));
  for (Eigen::Index p = 0; p < 256; ++p) EXPECT_LE(std::abs(mean[p] - exact[p]), 4.0 * se[p] + 1e-12) << p;
}

TEST(McExpectedMse, DiracIsExactAndAnalyticWithinBand) {
  am::SplitMix64 rng(2);
  const am::Grid g(8, 8);
  const auto img = am::testing::random_image(g, 2);
  const am::LinearModel m{am::testing::random_matrix(2, 64, rng) * 0.1, am::testing::random_vector(2, rng)};
  const am::Vector y = am::testing::random_vector(2, rng);
  const auto dirac = am::ParamDistribution::dirac(0.3);
  const double exact =
      (y - m.weights * am::to_vector(am::reference_transform(TransformKind::Rotation, {0.3, 0}, img)) - m.bias).squaredNorm();
  EXPECT_NEAR(am::mc_expected_mse(m, img, y, TransformKind::Rotation, dirac, 1, 1), exact, 1e-13 * exact);
  EXPECT_NEAR(am::mc_expected_mse(m, img, y, TransformKind::Rotation, dirac, 1000, 5), exact, 1e-13 * exact);

  const auto dist = gauss2(0.1);
  const double analytic = am::quadrature_sample_mse(m, img, y, TransformKind::Translation, dist,
                                                    am::aligned_quadrature(TransformKind::Translation, dist, g, 65));
  const auto est = am::mc_expected_mse_detailed(m, img, y, TransformKind::Translation, dist, 10000, 9);
  EXPECT_GT(est.std_error, 0.0);
  EXPECT_LE(std::abs(est.mean - analytic), 3.0 * est.std_error);
  EXPECT_THROW(am::mc_expected_mse(m, am::Image(am::Grid(4, 4)), y, TransformKind::Translation, dist, 10, 1),
               am::ShapeError);
}

TEST(ConvergenceSweep, DiracHasNoError) {
  const am::Grid g(8, 8);
  const auto img = am::testing::random_image(g, 4);
  const auto dirac = am::ParamDistribution::product(am::Dirac{0.05}, am::Dirac{0.0});
  am::SplitMix64 rng(1);
  const am::LossProbe probe{{am::testing::random_matrix(1, 64, rng), am::Vector::Zero(1)}, am::Vector::Ones(1)};
  const auto ref = am::convergence_reference(TransformKind::Translation, dirac, img, probe);
  const auto recs = am::convergence_sweep(TransformKind::Translation, dirac, img, ref, probe, {1, 10, 100}, 3, 5);
  ASSERT_EQ(recs.size(), 9u);
  for (const auto& r : recs) {
    EXPECT_LE(r.image_l2_error, 1e-12);
    EXPECT_LE(r.loss_abs_error, 1e-12);
  }
  EXPECT_EQ(recs[4].n_samples, 10u);
  EXPECT_EQ(recs[4].run_index, 1u);
  EXPECT_EQ(recs[4].seed, 6u);
}

TEST(ConvergenceSweep, DeterministicAndRate) {
  const am::Grid g(16, 16);
  const auto img = am::synth_image(g, 1, 0.25);
  const auto dist = gauss2(0.1);
  const auto ref = am::convergence_reference(TransformKind::Translation, dist, img, std::nullopt);
  const std::vector<std::size_t> grid{10, 100, 1000, 10000};
  am::set_max_threads(3);
  const auto a = am::convergence_sweep(TransformKind::Translation, dist, img, ref, std::nullopt, grid, 10, 7);
  am::set_max_threads(1);
  const auto b = am::convergence_sweep(TransformKind::Translation, dist, img, ref, std::nullopt, grid, 10, 7);
  am::set_max_threads(0);
  std::ostringstream sa;
  std::ostringstream sb;
  am::write_convergence_csv(sa, a);
  am::write_convergence_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, 34), "n,run,img_l2_err,loss_abs_err,seed");
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double m = 0.0;
    for (std::size_t r = 0; r < 10; ++r) m += a[i * 10 + r].image_l2_error;
    x.push_back(double(grid[i]));
    y.push_back(m / 10);
  }
  const double slope = am::loglog_fit(x, y).first;
  EXPECT_GE(slope, -0.6);
  EXPECT_LE(slope, -0.4);
  EXPECT_THROW(am::convergence_sweep(TransformKind::Translation, dist, img, ref, std::nullopt, {10, 5}, 1, 1),
               am::ArgumentError);
}

TEST(LogLogFit, ExactPowerLaw) {
  const auto [slope, icpt] = am::loglog_fit({1, 10, 100}, {3, 3 / std::sqrt(10.0), 0.3});
  EXPECT_NEAR(slope, -0.5, 1e-14);
  EXPECT_NEAR(icpt, std::log(3.0), 1e-14);
}

TEST(SgdTrain, ZeroLearningRateKeepsInitialization) {
  const auto train = toy_dataset(20, 1);
  const auto test = toy_dataset(10, 2);
  am::TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  cfg.batch = 4;
  const auto res = am::sgd_train_linear(train, test, cfg);
  ASSERT_EQ(res.curve.size(), 3u);
  for (const auto& p : res.curve) {
    EXPECT_EQ(p.test_mse, 1.0);  // zero model on one-hot targets
    EXPECT_EQ(p.epoch, &p - &res.curve[0] + 1);
  }
  cfg.lr = -1.0;
  EXPECT_THROW(am::sgd_train_linear(train, test, cfg), am::ArgumentError);
}

TEST(SgdTrain, DiracSampledMatchesAnalytic) {
  const auto train = toy_dataset(16, 3);
  const auto test = toy_dataset(12, 4);
  am::TrainConfig cfg;
  cfg.dist = am::ParamDistribution::product(am::Dirac{0.0}, am::Dirac{0.0});
  cfg.epochs = 4000;
  cfg.batch = 16;
  cfg.lr = 0.02;
  const auto sampled = am::sgd_train_linear(train, test, cfg);
  cfg.mode = am::TrainMode::ExpectedLoss;
  const auto gd = am::sgd_train_linear(train, test, cfg);
  EXPECT_NEAR(sampled.curve.back().test_mse, gd.curve.back().test_mse, 1e-6);
  EXPECT_EQ(gd.curve.back().n_aug, "analytic-gd");
  EXPECT_EQ(sampled.curve.back().test_accuracy, 1.0);
}

TEST(SgdTrain, ClosedFormMinimizesExpectedLoss) {
  const auto train = toy_dataset(30, 5);
  const auto test = toy_dataset(10, 6);
  am::TrainConfig cfg;
  cfg.dist = gauss2(0.1);
  cfg.mode = am::TrainMode::ClosedForm;
  const auto stats = am::expected_gram_stats(train, cfg.kind, cfg.dist);
  const auto cf = am::sgd_train_linear(train, test, cfg, &stats);
  ASSERT_EQ(cf.curve.size(), 1u);
  EXPECT_EQ(cf.curve[0].n_aug, "analytic-closed");
  cfg.mode = am::TrainMode::ExpectedLoss;
  cfg.epochs = 50;
  cfg.lr = 0.05;
  const auto gd = am::sgd_train_linear(train, test, cfg, &stats);
  EXPECT_LE(am::expected_mse(cf.model, stats), am::expected_mse(gd.model, stats) + 1e-12);
  // gram statistics agree with per-sample quadrature moments
  am::AugmentedDataset data;
  const auto y = train.one_hot();
  const auto q = am::aligned_quadrature(cfg.kind, cfg.dist, train.images[0].grid(), 257);
  for (std::size_t n = 0; n < train.size(); ++n) {
    const auto ms = am::moment_set(cfg.kind, cfg.dist, train.images[n], q);
    data.records.push_back({ms.mean, ms.variance, y.row(static_cast<Eigen::Index>(n)).transpose(), std::nullopt});
  }
  const auto ref = am::gram_stats(data);
  EXPECT_LE((ref.gram - stats.gram).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((ref.cross - stats.cross).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((ref.sum_mean - stats.sum_mean).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SgdTrain, TrainCsvSchema) {
  std::ostringstream os;
  am::write_train_csv(os, {{1000, "50", 3, 0.5, 0.75, 9}});
  EXPECT_EQ(os.str(), "train_size,n_aug,epoch,test_mse,test_acc,seed\n1000,50,3,0.5,0.75,9\n");
}
