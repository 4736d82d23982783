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
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "augmoments/core.hpp"
#include "augmoments/dataio.hpp"
#include "augmoments/distribution.hpp"
#include "augmoments/losses.hpp"
#include "augmoments/moments.hpp"
#include "augmoments/parallel.hpp"
#include "augmoments/random.hpp"
#include "augmoments/transform.hpp"

namespace augmoments {

/// Mean of n transformed copies of img under i.i.d. draws seeded by `seed`.
inline Image mc_expected_image(TransformKind kind, const ParamDistribution& dist, const Image& img,
                               std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ArgumentError("mc_expected_image: n must be >= 1");
  require_arity(kind, dist);
  SplitMix64 rng(seed);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(img.size()));
  for (std::size_t s = 0; s < n; ++s) acc += to_vector(transform_image(kind, sample(dist, rng), img));
  return to_image(img.grid(), acc / static_cast<double>(n));
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

inline double sample_mse(const LinearModel& model, const Vector& x, const Vector& target) {
  return (target - model.weights * x - model.bias).squaredNorm();
}

/// Mean per-draw MSE with its standard error.
inline McEstimate mc_expected_mse_detailed(const LinearModel& model, const Image& img, const Vector& target,
                                           TransformKind kind, const ParamDistribution& dist, std::size_t n,
                                           std::uint64_t seed) {
  if (n == 0) throw ArgumentError("mc_expected_mse: n must be >= 1");
  check_model(model, img.size(), static_cast<std::size_t>(target.size()), "mc_expected_mse");
  require_arity(kind, dist);
  SplitMix64 rng(seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const double l = sample_mse(model, to_vector(transform_image(kind, sample(dist, rng), img)), target);
    sum += l;
    sum_sq += l * l;
  }
  McEstimate e;
  e.samples = n;
  e.mean = sum / static_cast<double>(n);
  const double var = n > 1 ? std::max(0.0, (sum_sq - sum * e.mean) / static_cast<double>(n - 1)) : 0.0;
  e.std_error = std::sqrt(var / static_cast<double>(n));
  return e;
}

inline double mc_expected_mse(const LinearModel& model, const Image& img, const Vector& target, TransformKind kind,
                              const ParamDistribution& dist, std::size_t n, std::uint64_t seed) {
  return mc_expected_mse_detailed(model, img, target, kind, dist, n, seed).mean;
}

/// ||y - W mu - b||^2 + Tr(W Sigma W^T) for one image, moments from `quad`.
inline double quadrature_sample_mse(const LinearModel& model, const Image& img, const Vector& target,
                                    TransformKind kind, const ParamDistribution& dist, const QuadratureRule& quad) {
  check_model(model, img.size(), static_cast<std::size_t>(target.size()), "quadrature_sample_mse");
  const Vector mu = to_vector(quadrature_expected_image(kind, dist, img, quad));
  return sample_mse(model, mu, target) + projected_variance(kind, dist, img, quad, model.weights).trace();
}

// ---------------------------------------------------------------------------
// Convergence sweeps

struct ConvergenceRecord {
  std::size_t n_samples = 0;
  std::size_t run_index = 0;
  double image_l2_error = 0.0;
  double loss_abs_error = 0.0;
  std::uint64_t seed = 0;
};

/// Exact quantities the MC estimates are compared against.
struct ConvergenceReference {
  Image mean;
  std::optional<double> loss;
};

struct LossProbe {
  LinearModel model;
  Vector target;
};

/// Reference expectations: closed form for translation and single-axis
/// shear, otherwise an aligned quadrature rule with `n_nodes` per axis.
inline ConvergenceReference convergence_reference(TransformKind kind, const ParamDistribution& dist,
                                                  const Image& img, const std::optional<LossProbe>& probe,
                                                  std::size_t n_nodes = 129) {
  require_arity(kind, dist);
  const QuadratureRule quad = aligned_quadrature(kind, dist, img.grid(), n_nodes);
  ConvergenceReference ref{quadrature_expected_image(kind, dist, img, quad), std::nullopt};
  if (kind == TransformKind::Translation) {
    ref.mean = translation_expected_analytic(img, dist);
  } else if (kind == TransformKind::ShearHorizontal) {
    ref.mean = shear_expected_analytic(img, dist, Axis::Horizontal);
  } else if (kind == TransformKind::ShearVertical) {
    ref.mean = shear_expected_analytic(img, dist, Axis::Vertical);
  }
  if (probe) {
    check_model(probe->model, img.size(), static_cast<std::size_t>(probe->target.size()), "convergence_reference");
    ref.loss = sample_mse(probe->model, to_vector(ref.mean), probe->target) +
               projected_variance(kind, dist, img, quad, probe->model.weights).trace();
  }
  return ref;
}

/// For each run r (stream seed + r) draws max(n_grid) samples once and
/// records the errors of the running estimates at every n in n_grid. Runs
/// execute in parallel; records are ordered by (n, run).
inline std::vector<ConvergenceRecord> convergence_sweep(TransformKind kind, const ParamDistribution& dist,
                                                        const Image& img, const ConvergenceReference& ref,
                                                        const std::optional<LossProbe>& probe,
                                                        const std::vector<std::size_t>& n_grid, std::size_t runs,
                                                        std::uint64_t seed) {
  require_arity(kind, dist);
  if (n_grid.empty() || runs == 0) throw ArgumentError("convergence_sweep: empty n_grid or zero runs");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0) throw ArgumentError("convergence_sweep: n must be >= 1");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ArgumentError("convergence_sweep: n_grid must be ascending");
  }
  if (probe && !ref.loss) throw ArgumentError("convergence_sweep: loss probe given without a reference loss");
  require_same_grid(ref.mean.grid(), img.grid(), "convergence_sweep");
  const Vector ref_mean = to_vector(ref.mean);
  std::vector<ConvergenceRecord> out(n_grid.size() * runs);
  parallel_for_blocks(runs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const std::uint64_t run_seed = seed + r;
      SplitMix64 rng(run_seed);
      Vector acc = Vector::Zero(ref_mean.size());
      double loss_acc = 0.0;
      std::size_t next = 0;
      for (std::size_t s = 1; s <= n_grid.back(); ++s) {
        const Vector t = to_vector(transform_image(kind, sample(dist, rng), img));
        acc += t;
        if (probe) loss_acc += sample_mse(probe->model, t, probe->target);
        if (s == n_grid[next]) {
          ConvergenceRecord& rec = out[next * runs + r];
          rec.n_samples = s;
          rec.run_index = r;
          rec.seed = run_seed;
          rec.image_l2_error = (acc / static_cast<double>(s) - ref_mean).norm();
          rec.loss_abs_error = probe ? std::abs(loss_acc / static_cast<double>(s) - *ref.loss) : 0.0;
          ++next;
        }
      }
    }
  });
  return out;
}

inline void write_convergence_csv(std::ostream& os, const std::vector<ConvergenceRecord>& records) {
  CsvWriter csv(os);
  csv.row("n", "run", "img_l2_err", "loss_abs_err", "seed");
  for (const auto& r : records) csv.row(r.n_samples, r.run_index, r.image_l2_error, r.loss_abs_error, r.seed);
}

/// Least-squares slope and intercept of log(y) on log(x).
inline std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("loglog_fit: need two or more matching points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw ArgumentError("loglog_fit: values must be positive");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope, (sy - slope * sx) / n};
}

// ---------------------------------------------------------------------------
// Linear one-hot regression training

enum class TrainMode {
  Sampled,       // mini-batch SGD on n_aug fresh draws per sample per epoch
  ExpectedLoss,  // full-batch gradient descent on the expected MSE
  ClosedForm,    // optimal_linear on the expected MSE
};

inline std::string_view mode_label(TrainMode m) {
  switch (m) {
    case TrainMode::Sampled:
      return "sampled";
    case TrainMode::ExpectedLoss:
      return "analytic-gd";
    case TrainMode::ClosedForm:
      return "analytic-closed";
  }
  return "?";
}

struct TrainConfig {
  TransformKind kind = TransformKind::Translation;
  ParamDistribution dist = ParamDistribution::product(Gaussian{0.0, 0.1}, Gaussian{0.0, 0.1});
  TrainMode mode = TrainMode::Sampled;
  std::size_t n_aug = 1;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  double lr = 0.01;
  std::uint64_t seed = 0;
};

struct TrainPoint {
  std::size_t train_size = 0;
  std::string n_aug;  // draw count, or the analytic mode label
  std::size_t epoch = 0;
  double test_mse = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<TrainPoint> curve;
  LinearModel model;
  double condition = 0.0;  // closed form only
};

namespace detail {

inline Matrix stack_images(const std::vector<Image>& images) {
  if (images.empty()) throw ArgumentError("empty dataset");
  Matrix x(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(images[0].size()));
  for (std::size_t n = 0; n < images.size(); ++n) {
    require_same_grid(images[n].grid(), images[0].grid(), "stack_images");
    x.row(static_cast<Eigen::Index>(n)) = to_vector(images[n]).transpose();
  }
  return x;
}

}  // namespace detail

/// Mean over samples of ||y - W x - b||^2 and argmax accuracy.
inline std::pair<double, double> evaluate(const LinearModel& model, const Matrix& x, const Matrix& y) {
  const Matrix pred = (x * model.weights.transpose()).rowwise() + model.bias.transpose();
  const double mse = (y - pred).squaredNorm() / static_cast<double>(x.rows());
  std::size_t correct = 0;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    Eigen::Index p = 0;
    Eigen::Index t = 0;
    pred.row(n).maxCoeff(&p);
    y.row(n).maxCoeff(&t);
    if (p == t) ++correct;
  }
  return {mse, static_cast<double>(correct) / static_cast<double>(x.rows())};
}

/// Sufficient statistics of the expected MSE over a whole labeled set. For
/// translation the augmented Gram matrix is the exact congruence
/// E[M (sum x x^T) M^T]; other kinds sum quadrature moments per sample.
inline GramStats expected_gram_stats(const LabeledDataset& train, TransformKind kind, const ParamDistribution& dist,
                                     std::size_t n_nodes = 129) {
  require_arity(kind, dist);
  const Matrix x = detail::stack_images(train.images);
  const Matrix y = train.one_hot();
  const Grid g = train.images[0].grid();
  GramStats s;
  s.count = train.size();
  s.sum_target = y.colwise().sum().transpose();
  s.sum_target_sq = y.squaredNorm();
  if (kind == TransformKind::Translation) {
    // E[M] is linear, so per-class sums of means are means of class sums
    s.cross = Matrix::Zero(y.cols(), x.cols());
    for (Eigen::Index k = 0; k < y.cols(); ++k) {
      const Vector class_sum = x.transpose() * y.col(k);
      s.cross.row(k) = to_vector(translation_expected_analytic(to_image(g, class_sum), dist)).transpose();
    }
    s.sum_mean = s.cross.colwise().sum().transpose();
    Matrix sm = Matrix::Zero(x.cols(), x.cols());
    sm.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    sm.triangularView<Eigen::StrictlyUpper>() = sm.transpose();
    s.gram = translation_expected_congruence(sm, g, dist);
    return s;
  }
  const QuadratureRule quad = aligned_quadrature(kind, dist, g, n_nodes);
  s.sum_mean = Vector::Zero(x.cols());
  s.cross = Matrix::Zero(y.cols(), x.cols());
  s.gram = Matrix::Zero(x.cols(), x.cols());
  for (std::size_t n = 0; n < train.size(); ++n) {
    const MomentSet m = moment_set(kind, dist, train.images[n], quad);
    s.sum_mean += m.mean;
    s.cross += y.row(static_cast<Eigen::Index>(n)).transpose() * m.mean.transpose();
    s.gram += m.second;
  }
  return s;
}

/// Trains f(x) = W x + b from zero on one-hot targets. Sampled mode shuffles
/// the n_aug copies of every sample each epoch and draws each copy's
/// parameter in processing order. ExpectedLoss takes the same number of
/// full-batch steps per epoch as sampled mode takes mini-batch steps.
/// ClosedForm reports the optimum as a single epoch-0 point.
inline TrainResult sgd_train_linear(const LabeledDataset& train, const LabeledDataset& test, const TrainConfig& cfg,
                                    const GramStats* stats = nullptr) {
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw ArgumentError("sgd_train_linear: lr must be >= 0");
  if (cfg.batch == 0) throw ArgumentError("sgd_train_linear: batch must be >= 1");
  if (cfg.mode == TrainMode::Sampled && cfg.n_aug == 0) throw ArgumentError("sgd_train_linear: n_aug must be >= 1");
  if (train.size() == 0 || test.size() == 0) throw ArgumentError("sgd_train_linear: empty dataset");
  require_arity(cfg.kind, cfg.dist);
  const Matrix xt = detail::stack_images(test.images);
  const Matrix yt = test.one_hot();
  const Matrix y = train.one_hot();
  const auto d = static_cast<std::size_t>(xt.cols());
  const auto k = static_cast<std::size_t>(yt.cols());

  TrainResult res;
  res.model = LinearModel::zeros(k, d);
  const std::string label =
      cfg.mode == TrainMode::Sampled ? std::to_string(cfg.n_aug) : std::string(mode_label(cfg.mode));
  auto record = [&](std::size_t epoch) {
    const auto [mse, acc] = evaluate(res.model, xt, yt);
    res.curve.push_back({train.size(), label, epoch, mse, acc, cfg.seed});
  };

  if (cfg.mode != TrainMode::Sampled) {
    GramStats local;
    if (!stats) {
      local = expected_gram_stats(train, cfg.kind, cfg.dist);
      stats = &local;
    }
    if (cfg.mode == TrainMode::ClosedForm) {
      const auto opt = optimal_linear_detailed(*stats);
      res.model = opt.model;
      res.condition = opt.condition;
      record(0);
      return res;
    }
    const std::size_t steps = (train.size() + cfg.batch - 1) / cfg.batch;
    const double inv_n = 1.0 / static_cast<double>(stats->count);
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
      for (std::size_t s = 0; s < steps; ++s) {
        const ModelGradient g = expected_mse_gradient(res.model, *stats);
        res.model.weights -= cfg.lr * inv_n * g.weights;
        res.model.bias -= cfg.lr * inv_n * g.bias;
      }
      record(e);
    }
    return res;
  }

  SplitMix64 rng(cfg.seed);
  const std::size_t total = train.size() * cfg.n_aug;
  std::vector<std::size_t> order(total);
  Matrix xb(static_cast<Eigen::Index>(cfg.batch), static_cast<Eigen::Index>(d));
  Matrix yb(static_cast<Eigen::Index>(cfg.batch), static_cast<Eigen::Index>(k));
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    for (std::size_t i = total; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (std::size_t start = 0; start < total; start += cfg.batch) {
      const std::size_t b = std::min(cfg.batch, total - start);
      for (std::size_t r = 0; r < b; ++r) {
        const std::size_t n = order[start + r] / cfg.n_aug;
        const Theta theta = sample(cfg.dist, rng);
        xb.row(static_cast<Eigen::Index>(r)) =
            to_vector(transform_image(cfg.kind, theta, train.images[n])).transpose();
        yb.row(static_cast<Eigen::Index>(r)) = y.row(static_cast<Eigen::Index>(n));
      }
      const auto bi = static_cast<Eigen::Index>(b);
      const Matrix err = (yb.topRows(bi) - xb.topRows(bi) * res.model.weights.transpose()).rowwise() -
                         res.model.bias.transpose();
      const double step = 2.0 * cfg.lr / static_cast<double>(b);
      res.model.weights.noalias() += step * err.transpose() * xb.topRows(bi);
      res.model.bias += step * err.colwise().sum().transpose();
    }
    record(e);
  }
  return res;
}

inline void write_train_csv(std::ostream& os, const std::vector<TrainPoint>& points) {
  CsvWriter csv(os);
  csv.row("train_size", "n_aug", "epoch", "test_mse", "test_acc", "seed");
  for (const auto& p : points) csv.row(p.train_size, p.n_aug, p.epoch, p.test_mse, p.test_accuracy, p.seed);
}

}  // namespace augmoments
