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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "augmoments/augmoments.hpp"

namespace augmoments::cli {

namespace fs = std::filesystem;

/// Outputs written so far; removed again if the command fails.
class OutputSet {
 public:
  const fs::path& add(const fs::path& p) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    paths_.push_back(p);
    return paths_.back();
  }
  void remove_all() noexcept {
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    paths_.clear();
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : paths_) out.push_back(p.string());
    return out;
  }

 private:
  std::vector<fs::path> paths_;
};

struct Options {
  // transform and law
  std::string kind = "translation";
  std::string dist;
  bool radians = false;
  std::size_t nodes = 129;
  std::size_t rank_nodes = kRankSweepNodes;
  std::string quadrature = "auto";
  std::uint64_t seed = 0;
  // input image
  std::string in;
  std::string synth = "64x64";
  std::uint64_t synth_seed = 0;
  double cutoff = 0.25;
  // outputs
  std::string out;
  std::string tensor;
  // experiment knobs
  std::string method = "auto";
  std::size_t mc_n = 1000;
  std::size_t k = 8;
  std::vector<double> amplitudes;
  double tol = kRankTolerance;
  std::vector<std::size_t> n_grid{10, 100, 1000, 10000};
  std::size_t runs = 10;
  std::size_t probe = 0;
  std::string images;
  std::string labels;
  std::size_t train_size = 1000;
  std::size_t test_size = 2000;
  std::optional<std::size_t> test_offset;
  std::vector<std::string> n_aug{"1", "50", "analytic"};
  std::size_t epochs = 100;
  double lr = 0.01;
  std::size_t batch = 32;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string weights;
  std::string bias;
  std::size_t random_model = 0;
  std::size_t label = 0;
  unsigned threads = 0;
};

inline std::string default_literal(TransformKind kind) {
  switch (kind) {
    case TransformKind::Translation:
    case TransformKind::Shear:
      return "prod(gauss(0,0.1),gauss(0,0.1))";
    case TransformKind::ShearHorizontal:
    case TransformKind::ShearVertical:
      return "gauss(0,0.1)";
    case TransformKind::Rotation:
      return "unif(-15,15)";
    case TransformKind::Zoom:
      return "unif(0.9,1.1)";
  }
  return "";
}

/// Rotation literals and amplitudes are in degrees unless --radians.
inline double angle_unit(TransformKind kind, bool radians) {
  return kind == TransformKind::Rotation && !radians ? std::numbers::pi / 180.0 : 1.0;
}

inline ParamDistribution resolve_dist(const Options& o, TransformKind kind) {
  const std::string lit = o.dist.empty() ? default_literal(kind) : o.dist;
  ParamDistribution d = parse_distribution(lit);
  require_arity(kind, d);
  const double unit = angle_unit(kind, o.radians);
  return unit == 1.0 ? d : d.scaled(unit);
}

inline Grid parse_size(const std::string& s) {
  const auto x = s.find('x');
  std::size_t h = 0;
  std::size_t w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    h = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    w = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw ArgumentError("--synth expects HxW, got '" + s + "'");
  }
  return Grid(h, w);
}

inline Image load_image(const Options& o) {
  if (!o.in.empty()) return read_pgm(o.in);
  return synth_image(parse_size(o.synth), o.synth_seed, o.cutoff);
}

/// Largest aligned rule `--quadrature auto` accepts before using the plain rule.
inline constexpr std::size_t kAutoAlignedCap = 250000;

inline QuadratureRule make_rule(const Options& o, TransformKind kind, const ParamDistribution& d, const Grid& g,
                                nlohmann::json& info, std::size_t cap = kAutoAlignedCap) {
  if (o.nodes == 0) throw ArgumentError("--nodes must be >= 1");
  std::string choice = o.quadrature;
  if (choice == "auto") choice = aligned_quadrature_size(kind, d, g, o.nodes) <= cap ? "aligned" : "plain";
  QuadratureRule rule = choice == "aligned" ? aligned_quadrature(kind, d, g, o.nodes) : quadrature(d, o.nodes);
  info["quadrature"] = choice;
  info["quadrature_nodes"] = rule.size();
  return rule;
}

inline fs::path sibling(const fs::path& base, const std::string& suffix) {
  return base.parent_path() / (base.stem().string() + suffix);
}

inline void write_text(OutputSet& outs, const fs::path& p, const std::string& text) {
  std::ofstream f(outs.add(p), std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw FormatError("write failed for '" + p.string() + "'");
}

/// CSV goes to --out when given, otherwise to stdout.
inline void emit_csv(OutputSet& outs, const Options& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) {
    out << text;
  } else {
    write_text(outs, o.out, text);
  }
}

inline void require_out(const Options& o, const char* cmd) {
  if (o.out.empty()) throw ArgumentError(std::string(cmd) + ": --out is required");
}

inline Image image_from_vector(const Grid& g, const Vector& v) { return to_image(g, v); }

inline LinearModel random_model(std::size_t k, std::size_t d, std::uint64_t seed) {
  SplitMix64 rng(seed ^ 0x5bd1e995ULL);
  LinearModel m = LinearModel::zeros(k, d);
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < m.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.weights.cols(); ++j) m.weights(i, j) = s * rng.normal();
    m.bias[i] = 0.1 * rng.normal();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_expected_image(const Options& o, OutputSet& outs, nlohmann::json& info) {
  require_out(o, "expected-image");
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Image img = load_image(o);
  std::string method = o.method;
  if (method == "auto") {
    const bool closed = kind == TransformKind::Translation || kind == TransformKind::ShearHorizontal ||
                        kind == TransformKind::ShearVertical;
    method = closed ? "analytic" : "quadrature";
  }
  std::optional<Image> mean;
  if (method == "analytic") {
    if (kind == TransformKind::Translation) {
      mean = translation_expected_analytic(img, d);
    } else if (kind == TransformKind::ShearHorizontal) {
      mean = shear_expected_analytic(img, d, Axis::Horizontal);
    } else if (kind == TransformKind::ShearVertical) {
      mean = shear_expected_analytic(img, d, Axis::Vertical);
    } else {
      throw ArgumentError("--method analytic needs translation, shear-h or shear-v");
    }
  } else if (method == "quadrature") {
    mean = quadrature_expected_image(kind, d, img, make_rule(o, kind, d, img.grid(), info));
  } else if (method == "operator") {
    mean = expected_image(expected_operator(kind, d, img.grid(), make_rule(o, kind, d, img.grid(), info)), img);
  } else if (method == "mc") {
    mean = mc_expected_image(kind, d, img, o.mc_n, o.seed);
  } else {
    throw ArgumentError("unknown --method '" + method + "'");
  }
  info["method"] = method;
  write_pgm(outs.add(o.out), *mean);
  if (!o.tensor.empty()) {
    write_tensor(outs.add(o.tensor), {img.grid().height(), img.grid().width()}, mean->data());
  }
}

inline void cmd_expected_operator(const Options& o, OutputSet& outs, nlohmann::json& info) {
  require_out(o, "expected-operator");
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Grid g = o.in.empty() ? parse_size(o.synth) : read_pgm(o.in).grid();
  if (g.size() > kMaxDenseEigenSize) {
    throw ArgumentError("expected-operator: D = " + std::to_string(g.size()) + " exceeds " +
                        std::to_string(kMaxDenseEigenSize));
  }
  const ExpectedOperator op = expected_operator(kind, d, g, make_rule(o, kind, d, g, info));
  write_tensor(outs.add(o.out), {g.size(), g.size()}, op.matrix.data(), static_cast<std::size_t>(op.matrix.size()));
}

inline void cmd_variance_map(const Options& o, OutputSet& outs, nlohmann::json& info) {
  require_out(o, "variance-map");
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Image img = load_image(o);
  const StreamingMoments sm = streaming_moments(kind, d, img, make_rule(o, kind, d, img.grid(), info));
  const Image var = image_from_vector(img.grid(), sm.variance_diagonal.cwiseMax(0.0));
  info["max_variance"] = sm.variance_diagonal.maxCoeff();
  write_pgm(outs.add(o.out), normalize_for_display(var));
  if (!o.tensor.empty()) {
    write_tensor(outs.add(o.tensor), {img.grid().height(), img.grid().width()}, var.data());
  }
}

inline void cmd_eigvecs(const Options& o, OutputSet& outs, nlohmann::json& info, std::ostream& err) {
  require_out(o, "eigvecs");
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Image img = load_image(o);
  if (img.size() > kMaxDenseEigenSize) {
    throw ArgumentError("eigvecs: D = " + std::to_string(img.size()) + " exceeds " +
                        std::to_string(kMaxDenseEigenSize));
  }
  SpectralFactor f;
  const bool closed = o.quadrature == "auto" && (kind == TransformKind::Translation ||
                                                 ((kind == TransformKind::ShearHorizontal ||
                                                   kind == TransformKind::ShearVertical) &&
                                                  img.size() <= kMaxAnalyticSecondMomentSize));
  if (closed) {
    const Vector x = to_vector(img);
    Matrix second;
    Vector mean;
    if (kind == TransformKind::Translation) {
      second = translation_expected_congruence(x * x.transpose(), img.grid(), d);
      mean = to_vector(translation_expected_analytic(img, d));
    } else {
      const Axis axis = kind == TransformKind::ShearHorizontal ? Axis::Horizontal : Axis::Vertical;
      second = shear_second_moment_analytic(img, d, axis);
      mean = to_vector(shear_expected_analytic(img, d, axis));
    }
    info["quadrature"] = "closed-form";
    f = eig_sym(second - mean * mean.transpose(), o.tol);
  } else {
    // the centered factor is D x nodes; keep it near 512 MB
    const std::size_t cap = std::max<std::size_t>(1, (std::size_t{1} << 26) / img.size());
    f = eig_from_factor(centered_factor(kind, d, img, make_rule(o, kind, d, img.grid(), info, cap)), o.tol);
  }
  const std::size_t k = std::min(o.k, f.rank);
  if (k < o.k) err << "eigvecs: rank is " << f.rank << ", writing " << k << " eigenvectors\n";
  info["rank"] = f.rank;
  const fs::path base(o.out);
  std::ostringstream csv;
  CsvWriter w(csv);
  w.row("index", "eigenvalue");
  for (Eigen::Index i = 0; i < f.eigenvalues.size(); ++i) w.row(i, f.eigenvalues[i]);
  write_text(outs, sibling(base, "_eigenvalues.csv"), csv.str());
  const auto images = top_eigvec_images(f, img.grid(), k);
  for (std::size_t i = 0; i < k; ++i) {
    write_pgm(outs.add(sibling(base, "_vec" + std::to_string(i) + ".pgm")), normalize_for_display(images[i]));
  }
  write_tensor(outs.add(sibling(base, "_vecs.amtf")),
               Matrix(f.eigenvectors.leftCols(static_cast<Eigen::Index>(k))));
}

inline void cmd_rank_sweep(const Options& o, OutputSet& outs, std::ostream& out) {
  const TransformKind kind = parse_kind(o.kind);
  if (o.amplitudes.empty()) throw ArgumentError("rank-sweep: --amplitudes is required");
  const Image img = load_image(o);
  const auto points =
      rank_sweep(kind, o.amplitudes, img, symmetric_uniform_builder(kind, angle_unit(kind, o.radians)), o.rank_nodes,
                 o.tol);
  std::ostringstream csv;
  CsvWriter w(csv);
  w.row("amplitude", "rank", "lambda_max", "trace");
  for (const auto& p : points) w.row(p.amplitude, p.rank, p.lambda_max, p.trace);
  emit_csv(outs, o, out, csv.str());
}

inline void cmd_mc_converge(const Options& o, OutputSet& outs, std::ostream& out) {
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Image img = load_image(o);
  std::optional<LossProbe> probe;
  if (o.probe > 0) {
    LossProbe p{random_model(o.probe, img.size(), o.seed), Vector::Zero(static_cast<Eigen::Index>(o.probe))};
    p.target[static_cast<Eigen::Index>(o.label % o.probe)] = 1.0;
    probe = std::move(p);
  }
  const ConvergenceReference ref = convergence_reference(kind, d, img, probe, o.nodes);
  const auto records = convergence_sweep(kind, d, img, ref, probe, o.n_grid, o.runs, o.seed);
  std::ostringstream csv;
  write_convergence_csv(csv, records);
  emit_csv(outs, o, out, csv.str());
}

inline LabeledDataset load_dataset(const Options& o) {
  if (o.images.empty() || o.labels.empty()) throw ArgumentError("--images and --labels are required");
  return read_idx(o.images, o.labels);
}

inline void cmd_train_linear(const Options& o, OutputSet& outs, std::ostream& out, nlohmann::json& info) {
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const LabeledDataset all = load_dataset(o);
  const std::size_t offset = o.test_offset.value_or(o.train_size);
  if (o.train_size == 0 || o.test_size == 0) throw ArgumentError("--train-size and --test-size must be >= 1");
  if (o.train_size > all.size() || offset + o.test_size > all.size()) {
    throw ArgumentError("dataset has " + std::to_string(all.size()) + " images, too few for the requested split");
  }
  const LabeledDataset train = all.slice(0, o.train_size);
  const LabeledDataset test = all.slice(offset, o.test_size);

  std::vector<std::pair<TrainMode, std::size_t>> modes;
  for (const auto& token : o.n_aug) {
    if (token == "analytic" || token == "analytic-closed") {
      modes.emplace_back(TrainMode::ClosedForm, 0);
    } else if (token == "analytic-gd") {
      modes.emplace_back(TrainMode::ExpectedLoss, 0);
    } else {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(token, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      if (used != token.size() || v == 0) throw ArgumentError("--n-aug: bad entry '" + token + "'");
      modes.emplace_back(TrainMode::Sampled, v);
    }
  }
  std::optional<GramStats> stats;
  std::vector<TrainPoint> points;
  for (std::uint64_t seed : o.seeds) {
    for (const auto& [mode, n_aug] : modes) {
      if (mode == TrainMode::ClosedForm && seed != o.seeds.front()) {
        // deterministic: same optimum for every seed, relabelled
        for (auto p : points) {
          if (p.n_aug == mode_label(mode) && p.seed == o.seeds.front()) {
            p.seed = seed;
            points.push_back(p);
            break;
          }
        }
        continue;
      }
      if (mode != TrainMode::Sampled && !stats) stats = expected_gram_stats(train, kind, d, o.nodes);
      TrainConfig cfg{kind, d, mode, n_aug == 0 ? 1 : n_aug, o.epochs, o.batch, o.lr, seed};
      const TrainResult r = sgd_train_linear(train, test, cfg, stats ? &*stats : nullptr);
      if (mode == TrainMode::ClosedForm) info["closed_form_condition"] = r.condition;
      points.insert(points.end(), r.curve.begin(), r.curve.end());
    }
  }
  std::ostringstream csv;
  write_train_csv(csv, points);
  emit_csv(outs, o, out, csv.str());
}

inline LinearModel load_model(const Options& o, std::size_t d) {
  if (!o.weights.empty()) {
    LinearModel m;
    m.weights = tensor_to_matrix(read_tensor(o.weights));
    if (static_cast<std::size_t>(m.weights.cols()) != d) {
      throw ShapeError("--weights has " + std::to_string(m.weights.cols()) + " columns, image has " +
                       std::to_string(d) + " pixels");
    }
    m.bias = Vector::Zero(m.weights.rows());
    if (!o.bias.empty()) {
      const Tensor b = read_tensor(o.bias);
      if (b.data.size() != static_cast<std::size_t>(m.weights.rows())) throw ShapeError("--bias length mismatch");
      m.bias = Eigen::Map<const Vector>(b.data.data(), static_cast<Eigen::Index>(b.data.size()));
    }
    return m;
  }
  if (o.random_model == 0) throw ArgumentError("expected-loss: give --weights or --random-model K");
  return random_model(o.random_model, d, o.seed);
}

inline void cmd_expected_loss(const Options& o, OutputSet& outs, std::ostream& out) {
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const Image img = load_image(o);
  const LinearModel m = load_model(o, img.size());
  if (o.label >= m.outputs()) throw ArgumentError("--label must be below the model output count");
  Vector target = Vector::Zero(static_cast<Eigen::Index>(m.outputs()));
  target[static_cast<Eigen::Index>(o.label)] = 1.0;
  const ConvergenceReference ref = convergence_reference(kind, d, img, LossProbe{m, target}, o.nodes);
  const double at_mean = sample_mse(m, to_vector(ref.mean), target);
  std::ostringstream csv;
  CsvWriter w(csv);
  w.row("quantity", "value");
  w.row("expected_mse", *ref.loss);
  w.row("mse_at_mean", at_mean);
  w.row("regularizer", *ref.loss - at_mean);
  if (o.mc_n > 0) {
    const McEstimate e = mc_expected_mse_detailed(m, img, target, kind, d, o.mc_n, o.seed);
    w.row("mc_mean", e.mean);
    w.row("mc_std_error", e.std_error);
  }
  emit_csv(outs, o, out, csv.str());
}

inline void cmd_optimal_w(const Options& o, OutputSet& outs, nlohmann::json& info) {
  require_out(o, "optimal-w");
  const TransformKind kind = parse_kind(o.kind);
  const ParamDistribution d = resolve_dist(o, kind);
  const LabeledDataset all = load_dataset(o);
  if (o.train_size == 0 || o.train_size > all.size()) throw ArgumentError("--train-size out of range");
  const GramStats s = expected_gram_stats(all.slice(0, o.train_size), kind, d, o.nodes);
  const OptimalLinearResult r = optimal_linear_detailed(s);
  info["condition"] = r.condition;
  info["jittered"] = r.jittered;
  info["expected_mse"] = expected_mse(r.model, s) / static_cast<double>(s.count);
  write_tensor(outs.add(o.out), r.model.weights);
  write_tensor(outs.add(sibling(o.out, "_bias.amtf")), {static_cast<std::uint64_t>(r.model.bias.size())},
               r.model.bias.data(), static_cast<std::size_t>(r.model.bias.size()));
}

// ---------------------------------------------------------------------------

inline nlohmann::json option_values(const CLI::App* sub) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help") continue;
    const auto& res = opt->results();
    const std::string key = opt->get_name();
    if (opt->get_type_size() == 0) {
      cfg[key] = opt->count() > 0;
    } else if (!res.empty()) {
      cfg[key] = res.size() == 1 ? nlohmann::json(res[0]) : nlohmann::json(res);
    } else {
      cfg[key] = opt->get_default_str();
    }
  }
  return cfg;
}

inline void add_kind(CLI::App* s, Options& o) {
  s->add_option("--kind", o.kind, "translation | shear-h | shear-v | shear | rotation | zoom")->capture_default_str();
  s->add_flag("--radians", o.radians, "Rotation angles in radians (default: degrees)");
}

inline void add_dist(CLI::App* s, Options& o) {
  s->add_option("--dist", o.dist,
                "Parameter law: gauss(mu,sigma) | unif(lo,hi) | dirac(v) | prod(a,b); default depends on --kind");
}

inline void add_quadrature(CLI::App* s, Options& o) {
  s->add_option("--nodes", o.nodes, "Quadrature nodes per axis")->capture_default_str();
  s->add_option("--quadrature", o.quadrature, "aligned | plain | auto (aligned up to 250000 nodes)")
      ->check(CLI::IsMember({"auto", "aligned", "plain"}))
      ->capture_default_str();
}

inline void add_image(CLI::App* s, Options& o) {
  s->add_option("--in", o.in, "Input image (binary PGM)");
  s->add_option("--synth", o.synth, "Synthetic input HxW when --in is absent")->capture_default_str();
  s->add_option("--synth-seed", o.synth_seed, "Seed of the synthetic image")->capture_default_str();
  s->add_option("--cutoff", o.cutoff, "Smoothness of the synthetic image, in (0, 1]")->capture_default_str();
}

inline void add_seed(CLI::App* s, Options& o) {
  s->add_option("--seed", o.seed, "Random seed")->capture_default_str();
}

inline void add_dataset(CLI::App* s, Options& o) {
  s->add_option("--images", o.images, "IDX image file")->required();
  s->add_option("--labels", o.labels, "IDX label file")->required();
  s->add_option("--train-size", o.train_size, "Training images, taken from the start")->capture_default_str();
}

/// Parses argv, runs one subcommand, writes its manifest. Returns 0 on
/// success, 2 on usage errors, 1 on runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto t0 = std::chrono::steady_clock::now();
  Options o;
  CLI::App app{"Exact moments of image augmentations", "augmoments"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  app.add_option("--threads", o.threads, "Worker thread cap (0: AUGMOMENTS_THREADS or all cores)")
      ->capture_default_str();

  auto* ei = app.add_subcommand("expected-image", "Expected augmented image as PGM (and optional AMTF)");
  add_kind(ei, o);
  add_dist(ei, o);
  add_quadrature(ei, o);
  add_image(ei, o);
  add_seed(ei, o);
  ei->add_option("--method", o.method, "auto | analytic | quadrature | operator | mc")
      ->check(CLI::IsMember({"auto", "analytic", "quadrature", "operator", "mc"}))
      ->capture_default_str();
  ei->add_option("--mc-n", o.mc_n, "Draws for --method mc")->capture_default_str();
  ei->add_option("--out", o.out, "Output PGM");
  ei->add_option("--tensor", o.tensor, "Optional AMTF with the exact values");

  auto* eo = app.add_subcommand("expected-operator", "E[M] as a D x D AMTF tensor");
  add_kind(eo, o);
  add_dist(eo, o);
  add_quadrature(eo, o);
  eo->add_option("--in", o.in, "PGM whose size sets the grid");
  eo->add_option("--synth", o.synth, "Grid HxW when --in is absent")->capture_default_str();
  eo->add_option("--out", o.out, "Output AMTF");

  auto* vm = app.add_subcommand("variance-map", "Per-pixel augmentation variance");
  add_kind(vm, o);
  add_dist(vm, o);
  add_quadrature(vm, o);
  add_image(vm, o);
  vm->add_option("--out", o.out, "Output PGM (rescaled for display)");
  vm->add_option("--tensor", o.tensor, "Optional AMTF with the raw variances");

  auto* ev = app.add_subcommand("eigvecs", "Top eigenvectors of the augmentation variance");
  add_kind(ev, o);
  add_dist(ev, o);
  add_quadrature(ev, o);
  add_image(ev, o);
  ev->add_option("--k", o.k, "Eigenvectors to write")->capture_default_str();
  ev->add_option("--tol", o.tol, "Relative rank tolerance")->capture_default_str();
  ev->add_option("--out", o.out, "Output prefix: _eigenvalues.csv, _vec<i>.pgm, _vecs.amtf");

  auto* rs = app.add_subcommand("rank-sweep", "Numerical rank of the variance under unif(-a, a)");
  add_kind(rs, o);
  add_image(rs, o);
  rs->add_option("--nodes", o.rank_nodes, "Quadrature nodes")->capture_default_str();
  rs->add_option("--amplitudes", o.amplitudes, "Ascending amplitudes, comma separated")->delimiter(',');
  rs->add_option("--tol", o.tol, "Relative rank tolerance")->capture_default_str();
  rs->add_option("--out", o.out, "Output CSV (default: stdout)");

  auto* mc = app.add_subcommand("mc-converge", "Monte Carlo error against the exact moments");
  add_kind(mc, o);
  add_dist(mc, o);
  add_image(mc, o);
  add_seed(mc, o);
  mc->add_option("--nodes", o.nodes, "Quadrature nodes of the reference")->capture_default_str();
  mc->add_option("--n", o.n_grid, "Ascending sample counts, comma separated")->delimiter(',')->capture_default_str();
  mc->add_option("--runs", o.runs, "Independent runs")->capture_default_str();
  mc->add_option("--probe", o.probe, "Outputs of a random linear probe for the loss error (0: none)")
      ->capture_default_str();
  mc->add_option("--label", o.label, "Probe target class")->capture_default_str();
  mc->add_option("--out", o.out, "Output CSV (default: stdout)");

  auto* tl = app.add_subcommand("train-linear", "One-hot linear regression: sampled vs analytic augmentation");
  add_kind(tl, o);
  add_dist(tl, o);
  add_dataset(tl, o);
  tl->add_option("--nodes", o.nodes, "Quadrature nodes for non-translation kinds")->capture_default_str();
  tl->add_option("--test-size", o.test_size, "Test images")->capture_default_str();
  tl->add_option("--test-offset", o.test_offset, "First test image (default: --train-size)");
  tl->add_option("--n-aug", o.n_aug, "Draw counts and/or analytic | analytic-gd, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  tl->add_option("--epochs", o.epochs, "Epochs")->capture_default_str();
  tl->add_option("--lr", o.lr, "Learning rate")->capture_default_str();
  tl->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
  tl->add_option("--seeds", o.seeds, "Seeds, comma separated")->delimiter(',')->capture_default_str();
  tl->add_option("--out", o.out, "Output CSV (default: stdout)");

  auto* el = app.add_subcommand("expected-loss", "Expected MSE of a linear model on one image");
  add_kind(el, o);
  add_dist(el, o);
  add_image(el, o);
  add_seed(el, o);
  el->add_option("--nodes", o.nodes, "Quadrature nodes")->capture_default_str();
  el->add_option("--weights", o.weights, "AMTF K x D weights");
  el->add_option("--bias", o.bias, "AMTF K bias (default: zero)");
  el->add_option("--random-model", o.random_model, "Use a seeded random model with K outputs");
  el->add_option("--label", o.label, "Target class")->capture_default_str();
  el->add_option("--mc-n", o.mc_n, "Monte Carlo draws for comparison (0: skip)")->capture_default_str();
  el->add_option("--out", o.out, "Output CSV (default: stdout)");

  auto* ow = app.add_subcommand("optimal-w", "Minimizer of the expected MSE over a labeled set");
  add_kind(ow, o);
  add_dist(ow, o);
  add_dataset(ow, o);
  ow->add_option("--nodes", o.nodes, "Quadrature nodes for non-translation kinds")->capture_default_str();
  ow->add_option("--out", o.out, "Output AMTF weights; bias goes to <stem>_bias.amtf");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "augmoments: " << e.what() << " (see --help)\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  set_max_threads(o.threads);
  OutputSet outs;
  nlohmann::json info = nlohmann::json::object();
  try {
    const std::string name = sub->get_name();
    if (name == "expected-image") {
      cmd_expected_image(o, outs, info);
    } else if (name == "expected-operator") {
      cmd_expected_operator(o, outs, info);
    } else if (name == "variance-map") {
      cmd_variance_map(o, outs, info);
    } else if (name == "eigvecs") {
      cmd_eigvecs(o, outs, info, err);
    } else if (name == "rank-sweep") {
      cmd_rank_sweep(o, outs, out);
    } else if (name == "mc-converge") {
      cmd_mc_converge(o, outs, out);
    } else if (name == "train-linear") {
      cmd_train_linear(o, outs, out, info);
    } else if (name == "expected-loss") {
      cmd_expected_loss(o, outs, out);
    } else if (name == "optimal-w") {
      cmd_optimal_w(o, outs, info);
    }

    nlohmann::json manifest;
    std::vector<std::string> args(argv, argv + argc);
    manifest["argv"] = args;
    manifest["command"] = name;
    manifest["config"] = option_values(sub);
    manifest["seed"] = o.seed;
    manifest["threads"] = max_threads();
    manifest["version"] = kVersion;
    manifest["outputs"] = outs.names();
    manifest["results"] = info;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.out.empty()) {
      err << manifest.dump() << '\n';
    } else {
      write_text(outs, fs::path(o.out + ".manifest.json"), manifest.dump(2) + "\n");
    }
    return 0;
  } catch (const ArgumentError& e) {
    outs.remove_all();
    err << "augmoments " << sub->get_name() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    outs.remove_all();
    err << "augmoments " << sub->get_name() << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace augmoments::cli
