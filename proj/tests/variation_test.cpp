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

#include "evonas/genome_json.hpp"
#include "evonas/variation.hpp"

namespace evonas {
namespace {

Genome chain(std::size_t n) {
  Genome g;
  g.nodes.push_back(NodeGene::input());
  for (std::size_t i = 1; i < n; ++i) g.nodes.push_back(NodeGene::upsample());
  g.adjacency = Adjacency(n);
  for (std::size_t i = 1; i < n; ++i) g.adjacency.set(i, i - 1, true);
  return g;
}

// Independent acyclicity oracle: Kahn's algorithm over the adjacency.
bool has_topological_order(const Genome& g) {
  const std::size_t n = g.size();
  std::vector<int> indeg(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (g.adjacency.get(i, j)) ++indeg[i];
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  std::size_t done = 0;
  while (!ready.empty()) {
    const std::size_t j = ready.back();
    ready.pop_back();
    ++done;
    for (std::size_t i = 0; i < n; ++i)
      if (g.adjacency.get(i, j) && --indeg[i] == 0) ready.push_back(i);
  }
  return done == n;
}

TEST(Repair, OrphanGetsNearestPrecedingNode) {
  Genome g = chain(5);
  g.adjacency.set(3, 2, false);
  const Genome r = repair(g);
  EXPECT_TRUE(r.adjacency.get(3, 2));
  EXPECT_EQ(r.predecessors(3).size(), 1u);
}

TEST(Repair, ValidGenomeUnchanged) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Genome g = random_genome({}, rng);
    EXPECT_EQ(repair(g), g);
  }
}

TEST(Repair, ConnectiveKeepsTwoHighestPredecessors) {
  Genome g = chain(4);
  g.nodes[3] = NodeGene::connective(NodeKind::Concat, ResizeTarget::First);
  g.adjacency.set(3, 0, true);
  g.adjacency.set(3, 1, true);
  g.adjacency.set(3, 2, true);
  const Genome r = repair(g);
  EXPECT_EQ(r.predecessors(3), (std::vector<std::size_t>{1, 2}));
}

TEST(Repair, SingleInputKeepsHighestPredecessor) {
  Genome g = chain(4);
  g.adjacency.set(3, 0, true);
  EXPECT_EQ(repair(g).predecessors(3), (std::vector<std::size_t>{2}));
}

TEST(Repair, ConnectiveShortOneGainsNearestUnconnected) {
  Genome g = chain(4);
  g.nodes[3] = NodeGene::connective(NodeKind::Add, ResizeTarget::Second);
  g.adjacency.set(3, 2, false);
  g.adjacency.set(3, 1, true);
  EXPECT_EQ(repair(g).predecessors(3), (std::vector<std::size_t>{1, 2}));
}

TEST(Repair, ClearsUpperTriangleAndDropsConnectiveAtIndexOne) {
  Genome g = chain(3);
  g.adjacency.set(1, 2, true);
  g.adjacency.set(0, 1, true);
  EXPECT_TRUE(is_valid(repair(g)));
  Genome c = chain(3);
  c.nodes[1] = NodeGene::connective(NodeKind::Mul, ResizeTarget::First);
  const Genome r = repair(c);
  EXPECT_TRUE(is_valid(r));
  EXPECT_EQ(r.size(), 2u);
}

TEST(Prune, ChainUnchangedSideBranchRemovedIdempotent) {
  EXPECT_EQ(prune(chain(4)), chain(4));
  Genome g = chain(4);
  g.adjacency.set(3, 2, false);
  g.adjacency.set(3, 1, true);  // node 2 is now dead
  const Genome p = prune(g);
  EXPECT_EQ(p.size(), 3u);
  EXPECT_TRUE(is_valid(p));
  EXPECT_EQ(prune(p), p);
}

TEST(Mutate, RateZeroIsIdentity) {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const Genome g = random_genome({}, rng);
    EXPECT_EQ(mutate(g, 0.0, rng), g);
  }
}

TEST(Mutate, RateOneDeterministicAndValid) {
  Genome g = chain(3);
  Rng a(42), b(42);
  const Genome x = mutate(g, 1.0, a), y = mutate(g, 1.0, b);
  EXPECT_EQ(x, y);
  EXPECT_TRUE(is_valid(x));
}

TEST(Mutate, EdgeFlipFrequencyMatchesRate) {
  Rng rng(99);
  const Genome parent = random_genome({}, rng);
  for (double rate : {0.1, 0.5, 0.9}) {
    int flips = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
      MutationLog log;
      mutate(parent, rate, rng, &log);
      flips += log.flipped_edge ? 1 : 0;
    }
    EXPECT_NEAR(static_cast<double>(flips) / trials, rate, 0.02) << rate;
  }
}

TEST(Closure, TenThousandEachOperator) {
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const Genome a = random_genome({}, rng);
    const Genome b = random_genome({}, rng);
    ASSERT_TRUE(is_valid(a));
    const Genome m = mutate(a, 0.5, rng);
    ASSERT_TRUE(is_valid(m)) << serialize(a);
    ASSERT_TRUE(has_topological_order(m));
    ASSERT_EQ(m.nodes[0].kind, NodeKind::Input);
    const Genome c = crossover(a, b, rng);
    ASSERT_TRUE(is_valid(c)) << serialize(a) << serialize(b);
    ASSERT_TRUE(has_topological_order(c));
    const Genome p = prune(a);
    ASSERT_TRUE(is_valid(p));
    ASSERT_EQ(prune(p), p);
    ASSERT_EQ(repair(repair(m)), repair(m));
    const Genome mm = mutate(m, 1.0, rng);
    ASSERT_TRUE(is_valid(mm));
  }
}

TEST(Crossover, SelfCrossEqualsPrunedParentAndIsDeterministic) {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const Genome a = random_genome({}, rng);
    Rng r(7);
    Genome child = crossover(a, a, r);
    EXPECT_EQ(child.nodes, prune(a).nodes);
    EXPECT_EQ(child.adjacency, prune(a).adjacency);
    EXPECT_EQ(child.optimizer, a.optimizer);
  }
  Rng s(1);
  const Genome a = random_genome({}, s), b = random_genome({}, s);
  Rng r1(5), r2(5);
  EXPECT_EQ(crossover(a, b, r1), crossover(a, b, r2));
}

}  // namespace
}  // namespace evonas
