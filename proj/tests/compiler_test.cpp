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

#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <sstream>

#include "evonas/compiler.hpp"
#include "evonas/genome_json.hpp"
#include "test_util.hpp"

namespace evonas {
namespace {

constexpr std::int64_t kUnlimited = std::numeric_limits<std::int64_t>::max();

Genome fixture(const std::string& name) {
  std::ifstream in(std::string(EVONAS_FIXTURE_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

Genome single_conv(ConvGene c) {
  Genome g;
  g.nodes = {NodeGene::input(), NodeGene::conv_block(c)};
  g.adjacency = Adjacency(2);
  g.adjacency.set(1, 0, true);
  return g;
}

Genome input_only() {
  Genome g;
  g.nodes = {NodeGene::input()};
  g.adjacency = Adjacency(1);
  return g;
}

TEST(Compile, DenoisingFixtureShapes) {
  const auto plan = compile(fixture("denoise_gaussian.json"), {3, 64, 64}, kUnlimited);
  ASSERT_EQ(plan.steps.size(), 7u);
  EXPECT_EQ(plan.steps[1].output, (Shape3{12, 32, 32}));
  EXPECT_EQ(plan.steps[2].output, (Shape3{3, 64, 64}));
  EXPECT_EQ(plan.steps[3].output, (Shape3{1, 64, 64}));
  EXPECT_EQ(plan.steps[4].output, (Shape3{13, 64, 64}));
  EXPECT_EQ(plan.steps[6].convs[0].in_channels, 13);
  EXPECT_EQ(plan.steps[6].output, (Shape3{3, 128, 128}));
  EXPECT_FALSE(plan.truncated_at.has_value());
  ASSERT_EQ(plan.steps[4].coercions.size(), 1u);
  EXPECT_EQ(plan.steps[4].coercions[0].input_slot, 0u);
  EXPECT_EQ(plan.steps[4].coercions[0].to, (Shape3{12, 64, 64}));
}

TEST(Compile, SuperresFixtureShapesAndPrintout) {
  const Genome g = fixture("superres.json");
  const auto plan = compile(g, {3, 64, 64}, kUnlimited);
  ASSERT_EQ(plan.steps.size(), 14u);
  EXPECT_EQ(plan.steps[1].output, (Shape3{12, 128, 128}));
  EXPECT_EQ(plan.steps[3].output, (Shape3{3, 64, 64}));
  EXPECT_EQ(plan.steps[5].output, (Shape3{16, 128, 128}));
  EXPECT_EQ(plan.steps[11].output, (Shape3{3, 256, 256}));
  EXPECT_EQ(plan.steps[12].output, (Shape3{16, 128, 128}));
  EXPECT_EQ(plan.steps[13].output, (Shape3{8, 256, 256}));
  const auto lines1 = describe_step(plan.steps[1]);
  ASSERT_EQ(lines1.size(), 3u);
  EXPECT_EQ(lines1[0],
            "(conv): ConvTranspose2d(3, 12, kernel_size=(3, 3), stride=(2, 2), padding=(1, 1), "
            "output_padding=(1, 1), groups=3, bias=False)");
  EXPECT_EQ(lines1[1], "(activ): PReLU(num_parameters=1)");
  EXPECT_EQ(lines1[2], "(norm): BatchNorm2d(12, eps=1e-05, momentum=0.1, affine=True, track_running_stats=True)");
  EXPECT_EQ(describe_step(plan.steps[5])[2], "(norm): LocalResponseNorm(16, alpha=0.0001, beta=0.75, k=1)");
  EXPECT_EQ(describe_step(plan.steps[3])[0], "mul - resize to first");
  EXPECT_EQ(describe_step(plan.steps[11])[2], "(norm): Softmax2d()");
  EXPECT_EQ(describe_step(plan.steps[4])[0], "(conv): Conv2d(3, 32, kernel_size=(3, 3), stride=(1, 1), padding=(1, 1))");
  const std::string table = format_plan(g, plan);
  EXPECT_NE(table.find("Optimizer: Adam"), std::string::npos);
  EXPECT_NE(table.find("Initial learning rate: 0.041888"), std::string::npos);
  EXPECT_NE(table.find("Learning rate decay factor: 0.136235"), std::string::npos);
  EXPECT_NE(table.find("| 0 |  | Input node |"), std::string::npos);
}

TEST(Compile, CompressiveFixtureTakesSixChannels) {
  const auto plan = compile(fixture("compressive_sensing.json"), {6, 16, 16}, kUnlimited);
  EXPECT_EQ(describe_step(plan.steps[1])[0],
            "(conv): Conv2d(6, 32, kernel_size=(3, 3), stride=(2, 2), padding=(1, 1), bias=False)");
  EXPECT_EQ(plan.steps[5].output, (Shape3{3, 64, 64}));
}

// Hand count for the checkerboard architecture:
//   node 1  depthwise transposed 3x3 (3,1,3,3)=27 + bias 3 + PReLU 1  = 31
//   node 5  conv 6->3 3x3 = 162 + batch-norm affine 2*3               = 168
//   node 6  conv 3->3 3x3 = 81 + PReLU 1 + batch-norm affine 6        = 88
TEST(Compile, CheckerboardShapesAndParameterCount) {
  const Genome g = fixture("checkerboard.json");
  const auto plan = compile(g, {3, 16, 16}, kUnlimited);
  EXPECT_EQ(plan.parameter_count, 31 + 168 + 88);
  EXPECT_EQ(count_parameters(plan), 287);
  EXPECT_EQ(plan.steps[1].output, (Shape3{3, 32, 32}));
  EXPECT_EQ(plan.steps[4].output, (Shape3{6, 32, 32}));
  EXPECT_EQ(plan.steps[6].output, (Shape3{3, 16, 16}));
  Rng rng(1);
  auto params = init_params<float>(plan, rng);
  EXPECT_EQ(params.count(), 287);
  Tape<float> tape(false);
  std::vector<Shape3> seen;
  auto x = tape.constant(Tensor<float>(Shape{2, 3, 16, 16}, 0.25f));
  auto y = execute(plan, params, x, {3, 16, 16}, false, &seen);
  EXPECT_EQ(seen.back(), (Shape3{3, 16, 16}));
  EXPECT_EQ(y.shape(), (Shape{2, 3, 16, 16}));
}

TEST(Compile, InputOnlyPlan) {
  const auto plan = compile(input_only(), {3, 8, 8}, kUnlimited);
  ASSERT_EQ(plan.steps.size(), 1u);
  EXPECT_EQ(plan.memory_elements, 192);
  EXPECT_EQ(plan.parameter_count, 0);
}

TEST(Compile, MemoryIsSumOfStepOutputs) {
  ExecutionPlan two;
  two.steps.resize(2);
  two.steps[0].output = {3, 8, 8};
  two.steps[1].output = {16, 8, 8};
  EXPECT_EQ(estimate_memory(two), 1216);
  ConvGene c;
  c.channels = ChannelRule::Quadruple;
  const auto plan = compile(single_conv(c), {4, 8, 8}, kUnlimited);
  EXPECT_EQ(plan.steps[1].output, (Shape3{16, 8, 8}));
  EXPECT_EQ(plan.memory_elements, 256 + 1024);
  EXPECT_EQ(plan.memory_elements, estimate_memory(plan));
}

TEST(Compile, TruncationAtStepZeroStillExecutes) {
  const Genome g = fixture("denoise_gaussian.json");
  const auto plan = compile(g, {3, 16, 16}, 100);
  ASSERT_TRUE(plan.truncated_at.has_value());
  EXPECT_EQ(*plan.truncated_at, 0u);
  EXPECT_EQ(plan.steps.size(), 1u);
  Rng rng(2);
  auto params = init_params<float>(plan, rng);
  Tape<float> tape(false);
  auto x = tape.constant(Tensor<float>(Shape{1, 3, 16, 16}, 0.5f));
  auto y = execute(plan, params, x, {3, 16, 16}, false);
  EXPECT_EQ(y.value(), x.value());
}

TEST(Compile, TruncationIsMonotoneInLimit) {
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const Genome g = random_genome({}, rng);
    std::size_t last = 0;
    for (std::int64_t limit : {1, 500, 2000, 8000, 32000, 128000, 1 << 22}) {
      const auto plan = compile(g, {3, 16, 16}, limit);
      const std::size_t at = plan.truncated_at.value_or(g.size());
      ASSERT_GE(at, last);
      last = at;
    }
  }
}

TEST(Compile, MaxPoolOnSinglePixelBecomesPassThrough) {
  Genome g;
  g.nodes = {NodeGene::input(), NodeGene::max_pool(), NodeGene::max_pool()};
  g.adjacency = Adjacency(3);
  g.adjacency.set(1, 0, true);
  g.adjacency.set(2, 1, true);
  const auto plan = compile(g, {3, 2, 3}, kUnlimited);
  EXPECT_EQ(plan.steps[1].op, StepOp::MaxPool);
  EXPECT_EQ(plan.steps[2].op, StepOp::PassThrough);
  EXPECT_EQ(plan.steps[2].output, (Shape3{3, 1, 1}));
}

TEST(Compile, SeparableWithIndivisibleChannelsSplitsIntoDepthwiseAndPointwise) {
  ConvGene c;
  c.channels = ChannelRule::Half;
  c.separable = true;
  c.weight_norm = true;
  const auto plan = compile(single_conv(c), {6, 8, 8}, kUnlimited);
  ASSERT_EQ(plan.steps[1].convs.size(), 2u);  // 6 -> 3 is not a multiple of 6
  ConvGene grouped = c;
  grouped.channels = ChannelRule::Double;
  const auto p1 = compile(single_conv(grouped), {6, 8, 8}, kUnlimited);
  ASSERT_EQ(p1.steps[1].convs.size(), 1u);
  EXPECT_EQ(p1.steps[1].convs[0].groups(), 6);
  ConvGene d = c;
  d.channels = ChannelRule::Three;
  const auto p2 = compile(single_conv(d), {2, 8, 8}, kUnlimited);
  ASSERT_EQ(p2.steps[1].convs.size(), 2u);
  EXPECT_EQ(p2.steps[1].convs[0].groups(), 2);
  EXPECT_EQ(p2.steps[1].convs[1].kernel, 1);
  EXPECT_EQ(p2.steps[1].output, (Shape3{3, 8, 8}));
  // depthwise (2,1,3,3)=18 + gain 2; pointwise (3,2,1,1)=6 + gain 3 + bias 3
  EXPECT_EQ(p2.parameter_count, 18 + 2 + 6 + 3 + 3);
}

TEST(Execute, IdentityPointwiseConvReproducesInput) {
  ConvGene c;
  c.kernel = 1;
  c.bias = false;
  const auto plan = compile(single_conv(c), {3, 8, 8}, kUnlimited);
  Rng rng(3);
  auto params = init_params<double>(plan, rng);
  auto& w = params.params[0].value;
  w.fill(0.0);
  for (int k = 0; k < 3; ++k) w.at(k, k, 0, 0) = 1.0;
  Tape<double> tape(false);
  auto xt = testing::random_tensor(Shape{2, 3, 8, 8}, rng);
  auto y = execute(plan, params, tape.constant(xt), {3, 8, 8}, false);
  EXPECT_EQ(y.value(), xt);
}

TEST(Execute, ShapeOracleOnRandomGenomes) {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const Genome g = random_genome({}, rng);
    const auto plan = compile(g, {3, 16, 16}, 65536);
    auto params = init_params<float>(plan, rng);
    Tape<float> tape(false);
    std::vector<Shape3> seen;
    auto x = tape.constant(Tensor<float>(Shape{1, 3, 16, 16}, 0.5f));
    Var<float> y = x;
    try {
      y = execute(plan, params, x, {3, 16, 16}, true, &seen);
    } catch (const NumericError&) {
      continue;
    }
    ASSERT_EQ(seen.size(), plan.steps.size());
    for (std::size_t k = 0; k < seen.size(); ++k) ASSERT_EQ(seen[k], plan.steps[k].output) << serialize(g);
    ASSERT_EQ(y.shape(), (Shape{1, 3, 16, 16}));
  }
}

TEST(Execute, DeterministicForEqualSeeds) {
  const Genome g = fixture("checkerboard.json");
  const auto plan = compile(g, {3, 16, 16}, kUnlimited);
  auto run = [&] {
    Rng rng(17);
    auto params = init_params<float>(plan, rng);
    Tape<float> tape(false);
    auto x = tape.constant(Tensor<float>(Shape{2, 3, 16, 16}, 0.3f));
    return execute(plan, params, x, {3, 16, 16}, true).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Execute, ParameterMismatchIsShapeError) {
  const auto a = compile(fixture("checkerboard.json"), {3, 16, 16}, kUnlimited);
  const auto b = compile(fixture("denoise_gaussian.json"), {3, 16, 16}, kUnlimited);
  Rng rng(1);
  auto pb = init_params<float>(b, rng);
  Tape<float> tape(false);
  auto x = tape.constant(Tensor<float>(Shape{1, 3, 16, 16}));
  EXPECT_THROW(execute(a, pb, x, {3, 16, 16}, false), ShapeError);
}

// Loss gradients of whole compiled networks against central differences on
// a sample of parameter entries.
TEST(Execute, PlanGradientsMatchFiniteDifferences) {
  Rng rng(55);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 25; ++trial) {
    Genome g = random_genome({3, 6}, rng);
    for (auto& n : g.nodes) {
      if (n.kind == NodeKind::MaxPool2x2) n = NodeGene::upsample();
      // Keep the stencil away from derivative jumps at zero.
      if (n.conv && (n.conv->activation == Activation::ReLU || n.conv->activation == Activation::PReLU ||
                     n.conv->activation == Activation::SELU)) {
        n.conv->activation = Activation::Tanh;
      }
    }
    const auto plan = compile(g, {2, 4, 4}, 4096);
    if (plan.parameter_count == 0) continue;
    auto params = init_params<double>(plan, rng);
    auto x = testing::random_tensor(Shape{2, 2, 4, 4}, rng);
    auto target = testing::random_tensor(Shape{2, 2, 4, 4}, rng);
    auto loss_at = [&](bool backward) {
      Tape<double> tape(backward);
      for (auto& st : params.bn_stats) st = BatchNormStats<double>(st.mean.numel());
      auto y = execute(plan, params, tape.constant(x), {2, 4, 4}, true);
      auto loss = mse_loss(y, tape.constant(target));
      if (backward) {
        params.zero_grad();
        tape.backward(loss);
      }
      return loss.value()[0];
    };
    loss_at(true);
    double d2 = 0, a2 = 0, n2 = 0;
    for (auto& p : params.params) {
      for (int s = 0; s < 3; ++s) {
        const auto i = uniform_int(rng, 0, p.value.numel() - 1);
        const double orig = p.value[i];
        p.value[i] = orig + 1e-5;
        const double up = loss_at(false);
        p.value[i] = orig - 1e-5;
        const double down = loss_at(false);
        p.value[i] = orig;
        const double num = (up - down) / 2e-5;
        const double an = p.grad[i];
        d2 += (an - num) * (an - num);
        a2 += an * an;
        n2 += num * num;
      }
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-9});
    EXPECT_LT(std::sqrt(d2) / scale, 1e-5) << serialize(g);
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

}  // namespace
}  // namespace evonas
