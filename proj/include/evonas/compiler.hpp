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

// Genome -> ExecutionPlan. Resolves shapes node by node, records the
// adaptive-pool coercions connectives need, accounts activation memory and
// cuts the plan at the first step whose running element sum exceeds the
// memory limit. Plans are executed on a Tape with a ModelParams instance.

#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evonas/autodiff.hpp"
#include "evonas/genome.hpp"
#include "evonas/ops.hpp"
#include "evonas/rng.hpp"

namespace evonas {

enum class StepOp { Input, Conv, MaxPool, PassThrough, Upsample, Connective };

/// An adaptive-pool resize inserted in front of a connective input.
struct Coercion {
  std::size_t input_slot = 0;  // 0 = first input, 1 = second
  Shape3 from;
  Shape3 to;
  friend bool operator==(const Coercion&, const Coercion&) = default;
};

enum class ParamInit { KaimingUniform, Zeros, Ones, PReluSlope, FilterNorm };

/// Shape and initializer of one trainable tensor in a plan.
struct ParamSlot {
  std::string name;
  Shape shape;
  ParamInit init = ParamInit::Zeros;
  std::int64_t fan_in = 1;
  std::size_t norm_of = 0;  // FilterNorm: index of the direction tensor
};

struct ConvStageParams {
  std::size_t weight = 0;             // effective weight, or direction when weight-normed
  std::optional<std::size_t> gain;    // weight-norm gain
  std::optional<std::size_t> bias;
};

struct PlanStep {
  std::size_t node = 0;
  NodeKind kind = NodeKind::Input;
  StepOp op = StepOp::Input;
  std::vector<std::size_t> inputs;
  std::vector<Shape3> input_shapes;
  Shape3 output;
  std::vector<Coercion> coercions;

  // Conv block
  std::vector<ConvSpec> convs;  // one stage, or depthwise + pointwise
  std::vector<ConvStageParams> conv_params;
  Activation activation = Activation::None;
  Norm norm = Norm::None;
  std::optional<std::size_t> prelu_slope;
  std::optional<std::size_t> bn_gamma;
  std::optional<std::size_t> bn_beta;
  std::optional<std::size_t> bn_stats;

  // Connective
  std::optional<ConnectiveKind> connective;
  ResizeTarget resize = ResizeTarget::First;
};

struct ExecutionPlan {
  Shape3 input_shape;
  std::vector<PlanStep> steps;
  std::optional<std::size_t> truncated_at;
  std::int64_t memory_elements = 0;
  std::int64_t parameter_count = 0;
  std::vector<ParamSlot> params;
  std::size_t batch_norm_layers = 0;

  const PlanStep& last_step() const { return steps.back(); }
};

/// Activation elements summed over every executed step.
inline std::int64_t estimate_memory(const ExecutionPlan& plan) {
  std::int64_t total = 0;
  for (const PlanStep& s : plan.steps) total += s.output.numel();
  return total;
}

/// Conv weights, biases, weight-norm gains, norm affines and PReLU slopes.
inline std::int64_t count_parameters(const ExecutionPlan& plan) {
  std::int64_t total = 0;
  for (const ParamSlot& p : plan.params) total += p.shape.numel();
  return total;
}

namespace detail {

inline std::size_t add_param(ExecutionPlan& plan, std::string name, Shape shape, ParamInit init,
                             std::int64_t fan_in = 1, std::size_t norm_of = 0) {
  plan.params.push_back({std::move(name), shape, init, fan_in, norm_of});
  return plan.params.size() - 1;
}

inline void compile_conv(ExecutionPlan& plan, PlanStep& step, const ConvGene& gene, const Shape3& in) {
  const std::int64_t cin = in.c;
  const std::int64_t cout = resolve_channels(gene.channels, cin);
  ConvSpec first;
  first.in_channels = cin;
  first.kernel = gene.kernel;
  first.stride = gene.stride;
  first.transposed = gene.transposed;
  first.separable_depthwise = gene.separable;
  first.weight_norm = gene.weight_norm;
  if (!gene.separable || cout % cin == 0) {
    first.out_channels = cout;
    first.bias = gene.bias;
    step.convs.push_back(first);
  } else {
    first.out_channels = cin;
    first.bias = false;
    ConvSpec pointwise;
    pointwise.in_channels = cin;
    pointwise.out_channels = cout;
    pointwise.kernel = 1;
    pointwise.stride = 1;
    pointwise.weight_norm = gene.weight_norm;
    pointwise.bias = gene.bias;
    step.convs.push_back(first);
    step.convs.push_back(pointwise);
  }
  Shape3 shape = in;
  const std::string prefix = "node" + std::to_string(step.node) + ".";
  for (std::size_t s = 0; s < step.convs.size(); ++s) {
    const ConvSpec& spec = step.convs[s];
    spec.check();
    shape = spec.output_shape(shape);
    const Shape ws = spec.weight_shape();
    const std::int64_t fan_in = ws.c * ws.h * ws.w;
    const std::string stage = prefix + (s == 0 ? "conv" : "pointwise");
    ConvStageParams cp;
    if (spec.weight_norm) {
      cp.weight = add_param(plan, stage + ".direction", ws, ParamInit::KaimingUniform, fan_in);
      cp.gain = add_param(plan, stage + ".gain", Shape{ws.n, 1, 1, 1}, ParamInit::FilterNorm, 1, cp.weight);
    } else {
      cp.weight = add_param(plan, stage + ".weight", ws, ParamInit::KaimingUniform, fan_in);
    }
    if (spec.bias) cp.bias = add_param(plan, stage + ".bias", Shape{1, spec.out_channels, 1, 1}, ParamInit::Zeros);
    step.conv_params.push_back(cp);
  }
  step.activation = gene.activation;
  step.norm = gene.norm;
  if (gene.activation == Activation::PReLU) {
    step.prelu_slope = add_param(plan, prefix + "prelu.slope", Shape{1, 1, 1, 1}, ParamInit::PReluSlope);
  }
  if (gene.norm == Norm::BatchNorm) {
    step.bn_gamma = add_param(plan, prefix + "bn.weight", Shape{1, shape.c, 1, 1}, ParamInit::Ones);
    step.bn_beta = add_param(plan, prefix + "bn.bias", Shape{1, shape.c, 1, 1}, ParamInit::Zeros);
    step.bn_stats = plan.batch_norm_layers++;
  }
  step.output = shape;
}

}  // namespace detail

/// Compiles every node in index order. Steps are indexed like nodes; the plan
/// stops at the first step whose cumulative activation count exceeds
/// `mem_limit_elements` (that step is kept and becomes the output).
inline ExecutionPlan compile(const Genome& g, Shape3 input_shape, std::int64_t mem_limit_elements) {
  if (g.nodes.empty()) throw ShapeError("cannot compile an empty genome");
  if (input_shape.c <= 0 || input_shape.h <= 0 || input_shape.w <= 0) {
    throw ShapeError("input shape must be positive, got " + to_string(input_shape));
  }
  ExecutionPlan plan;
  plan.input_shape = input_shape;
  std::int64_t running = 0;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const NodeGene& node = g.nodes[i];
    PlanStep step;
    step.node = i;
    step.kind = node.kind;
    step.inputs = g.predecessors(i);
    for (const std::size_t p : step.inputs) step.input_shapes.push_back(plan.steps[p].output);
    switch (node.kind) {
      case NodeKind::Input:
        step.op = StepOp::Input;
        step.output = input_shape;
        break;
      case NodeKind::ConvBlock:
        step.op = StepOp::Conv;
        detail::compile_conv(plan, step, *node.conv, step.input_shapes.at(0));
        break;
      case NodeKind::MaxPool2x2: {
        const Shape3 in = step.input_shapes.at(0);
        if (in.h < 2 || in.w < 2) {
          step.op = StepOp::PassThrough;
          step.output = in;
        } else {
          step.op = StepOp::MaxPool;
          step.output = {in.c, in.h / 2, in.w / 2};
        }
        break;
      }
      case NodeKind::UpsampleNN2x: {
        const Shape3 in = step.input_shapes.at(0);
        step.op = StepOp::Upsample;
        step.output = {in.c, in.h * 2, in.w * 2};
        break;
      }
      case NodeKind::Concat:
      case NodeKind::Add:
      case NodeKind::Mul: {
        step.op = StepOp::Connective;
        step.connective = to_connective(node.kind);
        step.resize = node.resize.value_or(ResizeTarget::First);
        const Shape3 a = step.input_shapes.at(0), b = step.input_shapes.at(1);
        if (step.resize == ResizeTarget::First) {
          const Shape3 to = coercion_target(*step.connective, a, b);
          if (to != b) step.coercions.push_back({1, b, to});
        } else {
          const Shape3 to = coercion_target(*step.connective, b, a);
          if (to != a) step.coercions.push_back({0, a, to});
        }
        step.output = connective_output_shape(*step.connective, a, b, step.resize);
        break;
      }
    }
    running += step.output.numel();
    plan.steps.push_back(std::move(step));
    if (running > mem_limit_elements) {
      plan.truncated_at = i;
      break;
    }
  }
  plan.memory_elements = estimate_memory(plan);
  plan.parameter_count = count_parameters(plan);
  return plan;
}

/// Trainable tensors and batch-norm running statistics for one plan.
template <typename T>
struct ModelParams {
  std::vector<Parameter<T>> params;
  std::vector<BatchNormStats<T>> bn_stats;

  std::vector<Parameter<T>*> pointers() {
    std::vector<Parameter<T>*> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(&p);
    return out;
  }
  void zero_grad() {
    for (auto& p : params) p.zero_grad();
  }
  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.value.numel();
    return n;
  }
};

/// Kaiming-uniform (bound 1/sqrt(fan_in)) weights, zero biases, unit/zero
/// norm affines, PReLU slope 0.25; weight-norm gains start at ||direction||.
template <typename T>
ModelParams<T> init_params(const ExecutionPlan& plan, Rng& rng) {
  ModelParams<T> mp;
  mp.params.reserve(plan.params.size());
  for (const ParamSlot& slot : plan.params) {
    Tensor<T> v(slot.shape);
    switch (slot.init) {
      case ParamInit::KaimingUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(slot.fan_in, 1)));
        for (std::int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<T>(uniform(rng, -bound, bound));
        break;
      }
      case ParamInit::Zeros:
        break;
      case ParamInit::Ones:
        v.fill(T(1));
        break;
      case ParamInit::PReluSlope:
        v.fill(T(kPReluInit));
        break;
      case ParamInit::FilterNorm: {
        const Tensor<T>& dir = mp.params.at(slot.norm_of).value;
        const std::int64_t rows = dir.shape().n;
        const std::int64_t len = rows == 0 ? 0 : dir.numel() / rows;
        for (std::int64_t r = 0; r < rows; ++r) {
          double ss = 0;
          for (std::int64_t j = 0; j < len; ++j) ss += double(dir[r * len + j]) * double(dir[r * len + j]);
          v[r] = static_cast<T>(std::sqrt(ss));
        }
        break;
      }
    }
    mp.params.emplace_back(slot.name, std::move(v));
  }
  mp.bn_stats.resize(plan.batch_norm_layers);
  for (const PlanStep& s : plan.steps) {
    if (s.bn_stats) mp.bn_stats[*s.bn_stats] = BatchNormStats<T>(s.output.c);
  }
  return mp;
}

/// Runs the plan on `input` (batch, c, h, w) and coerces the last computed
/// tensor to `target`. When `observed` is given, each step's actual
/// per-sample output shape is appended to it.
template <typename T>
Var<T> execute(const ExecutionPlan& plan, ModelParams<T>& mp, Var<T> input, Shape3 target, bool training,
               std::vector<Shape3>* observed = nullptr) {
  Tape<T>& tape = *input.tape;
  if (input.shape().per_sample() != plan.input_shape) {
    throw ShapeError("plan expects input " + to_string(plan.input_shape) + ", got " +
                     to_string(input.shape().per_sample()));
  }
  if (mp.params.size() != plan.params.size() || mp.count() != plan.parameter_count) {
    throw ShapeError("parameter set does not match the plan");
  }
  std::vector<Var<T>> param_vars;
  param_vars.reserve(mp.params.size());
  for (auto& p : mp.params) param_vars.push_back(tape.parameter(p));

  std::vector<Var<T>> outs;
  outs.reserve(plan.steps.size());
  for (const PlanStep& step : plan.steps) {
    Var<T> y = input;
    switch (step.op) {
      case StepOp::Input:
        y = input;
        break;
      case StepOp::Conv: {
        y = outs[step.inputs[0]];
        for (std::size_t s = 0; s < step.convs.size(); ++s) {
          const ConvStageParams& cp = step.conv_params[s];
          Var<T> w = param_vars[cp.weight];
          if (cp.gain) w = weight_norm(w, param_vars[*cp.gain]);
          std::optional<Var<T>> b;
          if (cp.bias) b = param_vars[*cp.bias];
          y = conv2d(y, step.convs[s], w, b);
        }
        std::optional<Var<T>> slope;
        if (step.prelu_slope) slope = param_vars[*step.prelu_slope];
        y = activation(y, step.activation, slope);
        NormInputs<T> ni;
        if (step.bn_gamma) ni.gamma = param_vars[*step.bn_gamma];
        if (step.bn_beta) ni.beta = param_vars[*step.bn_beta];
        if (step.bn_stats) ni.stats = &mp.bn_stats[*step.bn_stats];
        y = normalize(y, step.norm, ni, training);
        break;
      }
      case StepOp::MaxPool:
        y = max_pool_2x2(outs[step.inputs[0]]);
        break;
      case StepOp::PassThrough:
        y = outs[step.inputs[0]];
        break;
      case StepOp::Upsample:
        y = upsample_nn_2x(outs[step.inputs[0]]);
        break;
      case StepOp::Connective:
        y = connective(*step.connective, outs[step.inputs[0]], outs[step.inputs[1]], step.resize);
        break;
    }
    if (observed) observed->push_back(y.shape().per_sample());
    outs.push_back(y);
  }
  Var<T> out = adaptive_avg_pool3d(outs.back(), target);
  if (!out.value().all_finite()) throw NumericError("non-finite network output");
  return out;
}

// ---------------------------------------------------------------------------
// Plan pretty-printer (PyTorch module syntax)

namespace detail {

inline std::string pair_str(int v) { return "(" + std::to_string(v) + ", " + std::to_string(v) + ")"; }

inline std::string describe_conv(const ConvSpec& s) {
  std::ostringstream os;
  os << (s.transposed ? "ConvTranspose2d(" : "Conv2d(") << s.in_channels << ", " << s.out_channels
     << ", kernel_size=" << pair_str(s.kernel) << ", stride=" << pair_str(s.stride);
  if (s.padding() != 0) os << ", padding=" << pair_str(s.padding());
  if (s.output_padding() != 0) os << ", output_padding=" << pair_str(s.output_padding());
  if (s.groups() != 1) os << ", groups=" << s.groups();
  if (!s.bias) os << ", bias=False";
  os << ")";
  if (s.weight_norm) os << " [weight_norm]";
  return os.str();
}

inline std::string describe_activation(Activation a) {
  switch (a) {
    case Activation::None: return "";
    case Activation::ReLU: return "ReLU()";
    case Activation::PReLU: return "PReLU(num_parameters=1)";
    case Activation::ELU: return "ELU(alpha=1.0)";
    case Activation::SELU: return "SELU()";
    case Activation::Tanh: return "Tanh()";
    case Activation::Sigmoid: return "Sigmoid()";
    case Activation::SoftmaxChannels: return "Softmax2d()";
  }
  return "";
}

inline std::string describe_norm(Norm n, std::int64_t c) {
  const std::string cs = std::to_string(c);
  switch (n) {
    case Norm::None: return "";
    case Norm::BatchNorm: return "BatchNorm2d(" + cs + ", eps=1e-05, momentum=0.1, affine=True, track_running_stats=True)";
    case Norm::InstanceNorm:
      return "InstanceNorm2d(" + cs + ", eps=1e-05, momentum=0.1, affine=False, track_running_stats=False)";
    case Norm::LocalResponse: return "LocalResponseNorm(" + cs + ", alpha=0.0001, beta=0.75, k=1)";
    case Norm::SoftmaxChannels: return "Softmax2d()";
  }
  return "";
}

inline std::string optimizer_title(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Adam: return "Adam";
    case OptimizerKind::RMSprop: return "RMSprop";
    case OptimizerKind::SGDMomentum: return "SGD (momentum)";
  }
  return "?";
}

}  // namespace detail

/// Description lines of one compiled step.
inline std::vector<std::string> describe_step(const PlanStep& s) {
  std::vector<std::string> lines;
  switch (s.op) {
    case StepOp::Input:
      lines.push_back("Input node");
      break;
    case StepOp::Conv: {
      for (std::size_t i = 0; i < s.convs.size(); ++i) {
        lines.push_back(std::string(i == 0 ? "(conv): " : "(pointwise): ") + detail::describe_conv(s.convs[i]));
      }
      if (s.activation != Activation::None) lines.push_back("(activ): " + detail::describe_activation(s.activation));
      if (s.norm != Norm::None) lines.push_back("(norm): " + detail::describe_norm(s.norm, s.output.c));
      break;
    }
    case StepOp::MaxPool:
      lines.push_back("maxpool");
      break;
    case StepOp::PassThrough:
      lines.push_back("maxpool (pass-through, input below 2x2)");
      break;
    case StepOp::Upsample:
      lines.push_back("upsample");
      break;
    case StepOp::Connective:
      lines.push_back(std::string(name_of(s.kind)) + " - resize to " + std::string(name_of(s.resize)));
      break;
  }
  return lines;
}

/// Markdown table: node index, input node(s), node type, output shape.
inline std::string format_plan(const Genome& g, const ExecutionPlan& plan) {
  std::ostringstream os;
  os << "Optimizer: " << detail::optimizer_title(g.optimizer.kind) << "\n";
  os << std::fixed << std::setprecision(6);
  os << "Initial learning rate: " << g.optimizer.lr0 << "\n";
  os << "Learning rate decay factor: " << g.optimizer.decay << "\n";
  os << "Input shape: " << to_string(plan.input_shape) << "\n";
  os << "Activation memory (elements): " << plan.memory_elements << "\n";
  os << "Parameters: " << plan.parameter_count << "\n";
  if (plan.truncated_at) os << "Truncated at node " << *plan.truncated_at << " (memory limit)\n";
  os << "\n| Node index | Input Node(s) | Node type | Output shape |\n";
  os << "|---|---|---|---|\n";
  for (const PlanStep& s : plan.steps) {
    std::string inputs;
    for (std::size_t k = 0; k < s.inputs.size(); ++k) inputs += (k ? ", " : "") + std::to_string(s.inputs[k]);
    std::string desc;
    const auto lines = describe_step(s);
    for (std::size_t k = 0; k < lines.size(); ++k) desc += (k ? "<br>" : "") + lines[k];
    os << "| " << s.node << " | " << inputs << " | " << desc << " | " << to_string(s.output) << " |\n";
  }
  for (std::size_t i = plan.steps.size(); i < g.nodes.size(); ++i) {
    os << "| " << i << " | | " << name_of(g.nodes[i].kind) << " (not executed) | |\n";
  }
  return os.str();
}

}  // namespace evonas
