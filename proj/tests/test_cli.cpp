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

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "../tools/cli_app.hpp"
#include "test_util.hpp"

namespace am = augmoments;
using am::testing::temp_path;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "augmoments");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = am::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + AUGMOMENTS_CLI + "\" " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string data_file(const char* name) { return std::string(AUGMOMENTS_DATA_DIR) + "/" + name; }

}  // namespace

TEST(Cli, RankSweepZeroAmplitudeIsDirac) {
  const Result r = run({"rank-sweep", "--kind", "rotation", "--amplitudes", "0", "--synth", "16x16"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "amplitude,rank,lambda_max,trace\n0,0,0,0\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"no-such-command"}).code, 2);
  EXPECT_EQ(run({"rank-sweep", "--amplitudes", "0", "--bogus"}).code, 2);
  EXPECT_EQ(run({"expected-image", "--dist", "gauss(0,0.1)", "--out", temp_path("u.pgm").string()}).code, 2);
  EXPECT_EQ(run({"expected-image", "--dist", "gauss(0,", "--out", temp_path("u.pgm").string()}).code, 2);
  EXPECT_EQ(run({"expected-image", "--quadrature", "simpson", "--out", temp_path("u.pgm").string()}).code, 2);
  const Result r = run({"rank-sweep", "--amplitudes", "3,1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

TEST(Cli, HelpAndVersionExitZero) {
  const Result h = run({"--help"});
  EXPECT_EQ(h.code, 0);
  for (const char* cmd : {"expected-image", "expected-operator", "variance-map", "eigvecs", "rank-sweep",
                          "mc-converge", "train-linear", "expected-loss", "optimal-w"}) {
    EXPECT_NE(h.out.find(cmd), std::string::npos) << cmd;
  }
  const Result sub = run({"mc-converge", "--help"});
  EXPECT_EQ(sub.code, 0);
  EXPECT_NE(sub.out.find("--runs"), std::string::npos);
  EXPECT_EQ(run({"--version"}).code, 0);
}

TEST(Cli, RuntimeErrorExitsOneAndRemovesOutputs) {
  const auto out = temp_path("missing_in.pgm");
  const Result r = run({"expected-image", "--in", temp_path("does_not_exist.pgm").string(), "--out", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(std::filesystem::exists(out));
  EXPECT_FALSE(std::filesystem::exists(out.string() + ".manifest.json"));

  // the PGM is written before the tensor path fails
  const auto pgm = temp_path("partial.pgm");
  const Result p = run({"expected-image", "--synth", "8x8", "--out", pgm.string(), "--tensor",
                        temp_path("partial.pgm").string() + "/not_a_dir/t.amtf"});
  EXPECT_NE(p.code, 0);
  EXPECT_FALSE(std::filesystem::exists(pgm));
}

TEST(Cli, ExpectedImageMatchesLibrary) {
  const auto pgm = temp_path("cli_exp.pgm");
  const auto amtf = temp_path("cli_exp.amtf");
  const Result r = run({"expected-image", "--dist", "prod(gauss(0,0.04),gauss(0,0.04))", "--synth", "24x20",
                        "--synth-seed", "3", "--out", pgm.string(), "--tensor", amtf.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const am::Image img = am::synth_image(am::Grid(24, 20), 3, 0.25);
  const am::Image want = am::translation_expected_analytic(
      img, am::ParamDistribution::product(am::Gaussian{0, 0.04}, am::Gaussian{0, 0.04}));
  const am::Tensor t = am::read_tensor(amtf);
  ASSERT_EQ(t.dims, (std::vector<std::uint64_t>{24, 20}));
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_EQ(t.data[k], want[k]);
  const am::Image back = am::read_pgm(pgm);
  EXPECT_LE(am::max_abs_diff(back, want), 0.5 / 255 + 1e-12);
}

TEST(Cli, RotationLiteralsAreDegrees) {
  const auto a = temp_path("deg.amtf");
  const auto b = temp_path("rad.amtf");
  ASSERT_EQ(run({"expected-image", "--kind", "rotation", "--dist", "unif(-10,10)", "--synth", "12x12", "--nodes",
                 "17", "--out", temp_path("deg.pgm").string(), "--tensor", a.string()})
                .code,
            0);
  const std::string rad = "unif(" + am::format_number(-10 * std::numbers::pi / 180) + "," +
                          am::format_number(10 * std::numbers::pi / 180) + ")";
  ASSERT_EQ(run({"expected-image", "--kind", "rotation", "--radians", "--dist", rad, "--synth", "12x12", "--nodes",
                 "17", "--out", temp_path("rad.pgm").string(), "--tensor", b.string()})
                .code,
            0);
  const auto ta = am::read_tensor(a).data;
  const auto tb = am::read_tensor(b).data;
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t k = 0; k < ta.size(); ++k) EXPECT_NEAR(ta[k], tb[k], 1e-14);
}

TEST(Cli, ManifestRecordsConfiguration) {
  const auto csv = temp_path("manifest_probe.csv");
  ASSERT_EQ(run({"mc-converge", "--n", "5,10", "--runs", "2", "--seed", "11", "--synth", "8x8", "--out",
                 csv.string()})
                .code,
            0);
  const auto m = nlohmann::json::parse(slurp(csv.string() + ".manifest.json"));
  EXPECT_EQ(m["command"], "mc-converge");
  EXPECT_EQ(m["seed"], 11);
  EXPECT_EQ(m["version"], am::kVersion);
  EXPECT_EQ(m["config"]["--runs"], "2");
  EXPECT_TRUE(m["wall_time_s"].is_number());
  EXPECT_EQ(m["argv"].size(), 12u);
}

TEST(Cli, ExpectedLossAgreesWithMonteCarlo) {
  const Result r = run({"expected-loss", "--synth", "12x12", "--random-model", "3", "--label", "1", "--mc-n",
                        "20000", "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::map<std::string, double> v;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    v[line.substr(0, c)] = std::stod(line.substr(c + 1));
  }
  EXPECT_GT(v["regularizer"], 0.0);
  EXPECT_NEAR(v["expected_mse"], v["mse_at_mean"] + v["regularizer"], 1e-12);
  EXPECT_NEAR(v["mc_mean"], v["expected_mse"], 5 * v["mc_std_error"]);
}

TEST(Cli, OptimalWeightsRoundTrip) {
  const auto w = temp_path("w_star.amtf");
  const Result r = run({"optimal-w", "--images", data_file("mnist5k-images-idx3-ubyte"), "--labels",
                        data_file("mnist5k-labels-idx1-ubyte"), "--train-size", "100", "--out", w.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto all = am::read_idx(data_file("mnist5k-images-idx3-ubyte"), data_file("mnist5k-labels-idx1-ubyte"));
  const auto stats = am::expected_gram_stats(all.slice(0, 100), am::TransformKind::Translation,
                                             am::ParamDistribution::product(am::Gaussian{0, 0.1}, am::Gaussian{0, 0.1}));
  am::LinearModel m{am::tensor_to_matrix(am::read_tensor(w)), am::Vector()};
  const auto b = am::read_tensor(temp_path("w_star_bias.amtf"));
  m.bias = Eigen::Map<const am::Vector>(b.data.data(), static_cast<Eigen::Index>(b.data.size()));
  const auto g = am::expected_mse_gradient(m, stats);
  EXPECT_LE(std::sqrt(g.weights.squaredNorm() + g.bias.squaredNorm()) / stats.count,
            1e-8 * (1 + m.weights.norm()));
}

TEST(Cli, BinaryIsDeterministic) {
  const auto a = temp_path("det_a.csv");
  const auto b = temp_path("det_b.csv");
  const std::string args = "mc-converge --n 10,100 --runs 3 --seed 7 --synth 16x16 --probe 2 --out ";
  ASSERT_EQ(run_binary(args + a.string()), 0);
  ASSERT_EQ(run_binary("--threads 1 " + args + b.string()), 0);
  const std::string sa = slurp(a);
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, slurp(b));
  EXPECT_NE(run_binary("rank-sweep --amplitudes x"), 0);
}
