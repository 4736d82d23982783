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

// Expected image of one input under each transform family.
//
//   demo_expected_image [input.pgm] [out_dir]    ("" for the default input)
//
// Without an input a 64x64 square is used.

#include <filesystem>
#include <iostream>
#include <numbers>

#include "augmoments/augmoments.hpp"

namespace am = augmoments;

int main(int argc, char** argv) {
  try {
    const am::Image img = argc > 1 && argv[1][0] != '\0' ? am::read_pgm(argv[1]) : am::square_image(am::Grid(64, 64), 0.5);
    const std::filesystem::path dir = argc > 2 ? argv[2] : "expected_images";
    std::filesystem::create_directories(dir);
    am::write_pgm(dir / "input.pgm", img);

    const double deg = std::numbers::pi / 180.0;
    const std::pair<am::TransformKind, am::ParamDistribution> cases[] = {
        {am::TransformKind::Translation, am::ParamDistribution::product(am::Gaussian{0, 0.04}, am::Gaussian{0, 0.04})},
        {am::TransformKind::Rotation, am::ParamDistribution::uniform(-15 * deg, 15 * deg)},
        {am::TransformKind::Zoom, am::ParamDistribution::uniform(0.8, 1.2)},
        {am::TransformKind::Shear, am::ParamDistribution::product(am::Gaussian{0, 0.1}, am::Gaussian{0, 0.1})},
    };
    for (const auto& [kind, dist] : cases) {
      const auto rule = am::quadrature(dist, 33);
      const am::Image mean = am::quadrature_expected_image(kind, dist, img, rule);
      const am::StreamingMoments sm = am::streaming_moments(kind, dist, img, rule);
      const std::string stem(am::name(kind));
      am::write_pgm(dir / (stem + "_mean.pgm"), mean);
      am::write_pgm(dir / (stem + "_variance.pgm"),
                    am::normalize_for_display(am::to_image(img.grid(), sm.variance_diagonal.cwiseMax(0.0))));
      std::cout << stem << "  " << dist.literal() << "  total variance " << sm.variance_diagonal.sum() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "demo_expected_image: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
