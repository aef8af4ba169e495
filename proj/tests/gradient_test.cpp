// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite differences against tape gradients, 50 seeds per primitive.

#include <gtest/gtest.h>

#include "gradient_cases.hpp"

namespace evonas {
namespace {

using testing::gradient_cases;
using testing::GradientCase;
using testing::kGradientSeeds;
using testing::kGradientTolerance;

class Gradient : public ::testing::TestWithParam<GradientCase> {};

TEST_P(Gradient, MatchesCentralDifferences) {
  const GradientCase& c = GetParam();
  for (int seed = 0; seed < kGradientSeeds; ++seed) {
    const auto r = c.run(seed);
    ASSERT_LT(r.rel_error, kGradientTolerance) << c.name << " seed " << seed << " " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Primitives, Gradient, ::testing::ValuesIn(gradient_cases()),
                         [](const ::testing::TestParamInfo<GradientCase>& info) { return info.param.name; });

}  // namespace
}  // namespace evonas
