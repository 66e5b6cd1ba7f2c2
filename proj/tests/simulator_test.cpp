/*
 * Copyright 2026 The collgraph Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *  http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace collgraph {
namespace {

using testing::alpha_beta;
using testing::fixture;
using testing::rel_error;

constexpr double kAlpha = 1e-6;
constexpr double kBw = 1e9;
constexpr Bytes kMiB = Bytes{1} << 20;

std::vector<Link> links(std::initializer_list<std::pair<PhysicalNode, PhysicalNode>> hops) {
  std::vector<Link> out;
  for (auto [a, b] : hops) out.push_back({a, b});
  return out;
}

TEST(Route, RingAdjacent) {
  EXPECT_EQ(route(Topology::ring(8), 0, 1), links({{0, 1}}));
  EXPECT_EQ(route(Topology::ring(8), 1, 0), links({{1, 0}}));
}

TEST(Route, RingTieGoesClockwise) {
  EXPECT_EQ(route(Topology::ring(8), 0, 4), links({{0, 1}, {1, 2}, {2, 3}, {3, 4}}));
  EXPECT_EQ(route(Topology::ring(8), 0, 5), links({{0, 7}, {7, 6}, {6, 5}}));
}

TEST(Route, MeshRowWrapNeedsEightLinks) {
  auto path = route(Topology::mesh2d(8, 8), 7, 8);
  ASSERT_EQ(path.size(), 8u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(path[i], (Link{static_cast<PhysicalNode>(7 - i),
                                                               static_cast<PhysicalNode>(6 - i)}));
  EXPECT_EQ(path[7], (Link{0, 8}));
}

TEST(Route, MeshDimensionOrder) {
  // (0,0) -> (2,3): three +X then two +Y.
  EXPECT_EQ(route(Topology::mesh2d(4, 4), 0, 11),
            links({{0, 1}, {1, 2}, {2, 3}, {3, 7}, {7, 11}}));
}

TEST(Route, TorusWrapsShorterWay) {
  EXPECT_EQ(route(Topology::torus2d(8, 8), 7, 8), links({{7, 0}, {0, 8}}));
  // Tie along X in a 4-wide torus goes increasing.
  EXPECT_EQ(route(Topology::torus2d(4, 4), 0, 2), links({{0, 1}, {1, 2}}));
  EXPECT_EQ(route(Topology::torus2d(4, 4), 2, 0), links({{2, 3}, {3, 0}}));
}

TEST(Route, SwitchAndFullyConnected) {
  EXPECT_EQ(route(Topology::switched(4), 1, 3), links({{1, 4}, {4, 3}}));
  EXPECT_EQ(route(Topology::fully_connected(8), 2, 6), links({{2, 6}}));
}

TEST(Route, Errors) {
  EXPECT_THROW(route(Topology::ring(4), 1, 1), UnreachableError);
  EXPECT_THROW(route(Topology::ring(4), 0, 9), UnreachableError);
}

TEST(Route, EveryHopIsALink) {
  for (const auto& topo : {Topology::ring(7), Topology::mesh2d(3, 5), Topology::torus2d(4, 3),
                           Topology::switched(5), Topology::fully_connected(5)})
    for (PhysicalNode a = 0; a < topo.endpoints(); ++a)
      for (PhysicalNode b = 0; b < topo.endpoints(); ++b) {
        if (a == b) continue;
        auto path = route(topo, a, b);
        ASSERT_FALSE(path.empty());
        EXPECT_EQ(path.front().src, a);
        EXPECT_EQ(path.back().dst, b);
        for (std::size_t i = 1; i < path.size(); ++i) EXPECT_EQ(path[i - 1].dst, path[i].src);
      }
}

TEST(Topology, ParseSpecs) {
  EXPECT_EQ(parse_topology("ring", 8).describe(), "ring(8)");
  EXPECT_EQ(parse_topology("fc", 8).kind(), TopologyKind::kFullyConnected);
  EXPECT_EQ(parse_topology("mesh2d:2x4", 8).cols(), 4u);
  EXPECT_EQ(parse_topology("torus2d:4x2", 8).rows(), 4u);
  EXPECT_EQ(parse_topology("switch", 8).node_count(), 9u);
  EXPECT_THROW(parse_topology("mesh2d:3x3", 8), SchemaError);
  EXPECT_THROW(parse_topology("mesh2d:8", 8), SchemaError);
  EXPECT_THROW(parse_topology("hypercube", 8), SchemaError);
}

TEST(Topology, PlacementMustBePermutation) {
  Topology t = Topology::ring(4);
  EXPECT_THROW(t.set_placement({0, 1, 1, 2}), SchemaError);
  EXPECT_THROW(t.set_placement({0, 1, 2}), SchemaError);
  t.set_placement({3, 2, 1, 0});
  EXPECT_EQ(t.node_of(0), 3u);
}

TEST(Simulate, EmptyTrace) {
  auto report = simulate(generate({Algorithm::kRingAllReduce, 1, 1024}), Topology::ring(1),
                         alpha_beta(kAlpha, kBw));
  EXPECT_EQ(report.total_duration, 0.0);
  EXPECT_EQ(report.event_count, 0u);
}

TEST(Simulate, RingAllReduceClosedForm) {
  auto report = simulate(generate({Algorithm::kRingAllReduce, 4, 4 * kMiB}), Topology::ring(4),
                         alpha_beta(kAlpha, kBw));
  EXPECT_LE(rel_error(report.total_duration, 6.297456e-3), 1e-12) << report.total_duration;
}

TEST(Simulate, FullyConnectedMatchesRing) {
  const Trace t = generate({Algorithm::kRingAllReduce, 4, 4 * kMiB});
  const auto cost = alpha_beta(kAlpha, kBw);
  EXPECT_EQ(simulate(t, Topology::fully_connected(4), cost).total_duration,
            simulate(t, Topology::ring(4), cost).total_duration);
}

TEST(Simulate, SwitchDoublesEveryStep) {
  const Trace t = generate({Algorithm::kRingAllReduce, 4, 4 * kMiB});
  const double c = static_cast<double>(kMiB);
  const double want = 6 * (2 * kAlpha + 2 * c / kBw);
  EXPECT_LE(rel_error(simulate(t, Topology::switched(4), alpha_beta(kAlpha, kBw)).total_duration, want),
            1e-12);
}

TEST(Simulate, RingAllGatherClosedForm) {
  auto report = simulate(generate({Algorithm::kRingAllGather, 4, kMiB}), Topology::ring(4),
                         alpha_beta(kAlpha, kBw));
  EXPECT_LE(rel_error(report.total_duration, 3.148728e-3), 1e-12);
}

TEST(Simulate, OracleEqualityAcrossRankCounts) {
  for (Rank n : {2u, 4u, 8u, 16u, 64u})
    for (Bytes s : {Bytes{64} << 10, kMiB, Bytes{64} * kMiB}) {
      const auto cost = alpha_beta(kAlpha, kBw);
      const double ar = simulate(generate({Algorithm::kRingAllReduce, n, s}), Topology::ring(n), cost)
                            .total_duration;
      const double ag = simulate(generate({Algorithm::kRingAllGather, n, s}), Topology::ring(n), cost)
                            .total_duration;
      EXPECT_LE(rel_error(ar, testing::ring_allreduce_time(n, s, kAlpha, kBw)), 1e-12) << n << " " << s;
      EXPECT_LE(rel_error(ag, testing::ring_allgather_time(n, s, kAlpha, kBw)), 1e-12) << n << " " << s;
    }
}

TEST(Simulate, TimingInvariants) {
  for (const auto& topo : {Topology::ring(8), Topology::mesh2d(2, 4), Topology::switched(8)}) {
    auto report = simulate(generate({Algorithm::kRecursiveDoublingAllGather, 8, 4096}), topo,
                           alpha_beta(kAlpha, kBw));
    double latest = 0;
    for (const auto& rank : report.ranks)
      for (const auto& t : rank) {
        EXPECT_GE(t.issue, 0.0);
        EXPECT_GE(t.start, t.issue);
        EXPECT_GE(t.finish, t.start);
        latest = std::max(latest, t.finish);
      }
    EXPECT_EQ(report.total_duration, latest);
  }
}

TEST(Simulate, IssueIsLatestDependencyFinish) {
  auto trace = generate({Algorithm::kRingAllReduce, 5, 5 * 4096});
  auto report = simulate(trace, Topology::mesh2d(1, 5), alpha_beta(kAlpha, kBw));
  for (Rank r = 0; r < 5; ++r) {
    auto index = index_by_id(trace.ranks[r]);
    for (std::size_t i = 0; i < trace.ranks[r].size(); ++i) {
      double want = 0;
      for (NodeId d : trace.ranks[r][i].deps) want = std::max(want, report.ranks[r][index[d]].finish);
      EXPECT_EQ(report.ranks[r][i].issue, want);
    }
  }
}

TEST(Simulate, MonotoneInAlphaAndBandwidth) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> alpha(0.0, 1e-5), bw(1e8, 1e11);
  const Trace t = generate({Algorithm::kRingAllReduce, 8, 8 * 65536});
  for (int trial = 0; trial < 30; ++trial) {
    double a1 = alpha(rng), a2 = alpha(rng), b1 = bw(rng), b2 = bw(rng);
    if (a1 > a2) std::swap(a1, a2);
    if (b1 < b2) std::swap(b1, b2);
    for (const auto& topo : {Topology::ring(8), Topology::mesh2d(2, 4), Topology::switched(8)}) {
      const double fast = simulate(t, topo, alpha_beta(a1, b1)).total_duration;
      const double slow = simulate(t, topo, alpha_beta(a2, b2)).total_duration;
      EXPECT_LE(fast, slow);
    }
  }
}

TEST(Simulate, WorkScalingWithoutLatency) {
  for (Rank n : {2u, 4u, 8u}) {
    const double once = simulate(generate({Algorithm::kRingAllReduce, n, Bytes{n} * 65536}),
                                 Topology::ring(n), alpha_beta(0, kBw))
                            .total_duration;
    const double twice = simulate(generate({Algorithm::kRingAllReduce, n, Bytes{n} * 131072}),
                                  Topology::ring(n), alpha_beta(0, kBw))
                             .total_duration;
    EXPECT_EQ(twice, 2 * once);
  }
}

TEST(Simulate, Deterministic) {
  const Trace t = generate({Algorithm::kRingAllReduce, 16, 16 * 4096});
  const Topology topo = Topology::torus2d(4, 4);
  EXPECT_EQ(simulate(t, topo, alpha_beta(kAlpha, kBw)), simulate(t, topo, alpha_beta(kAlpha, kBw)));
}

// Two messages on one link at the same instant: lower tag first, each holds
// the link for alpha + size/B.
TEST(Simulate, LinkFifoWithTagTieBreak) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 1000, 1, {});
  b.send(0, 1, 1000, 0, {});
  b.recv(1, 0, 1000, 0, {});
  b.recv(1, 0, 1000, 1, {});
  auto report = simulate(std::move(b).finish(), Topology::ring(2), alpha_beta(1.0, 1000.0));
  // ids: rank 0 send tag1 = 0, send tag0 = 1
  EXPECT_EQ(report.ranks[0][1].finish, 2.0);
  EXPECT_EQ(report.ranks[0][0].start, 2.0);
  EXPECT_EQ(report.ranks[0][0].finish, 4.0);
  EXPECT_EQ(report.ranks[1][0].finish, 2.0);
  EXPECT_EQ(report.ranks[1][1].finish, 4.0);
  ASSERT_EQ(report.links.size(), 1u);
  EXPECT_EQ(report.links[0].messages, 2u);
  EXPECT_EQ(report.links[0].busy_s, 4.0);
}

TEST(Simulate, StoreAndForwardAcrossHops) {
  TraceBuilder b(TraceClass::kCollective, 4, std::nullopt);
  b.send(0, 2, 500, 0, {});
  b.recv(2, 0, 500, 0, {});
  auto report = simulate(std::move(b).finish(), Topology::ring(4), alpha_beta(0.5, 1000.0));
  EXPECT_EQ(report.ranks[0][0].finish, 1.0);  // left the first link
  EXPECT_EQ(report.ranks[2][0].finish, 2.0);  // two hops of 1.0 each
  EXPECT_EQ(report.links.size(), 2u);
}

TEST(Simulate, LateRecvFinishesAtIssue) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 1000, 0, {});
  auto busy = b.comp(1, "GEMM", 5000, {});
  b.recv(1, 0, 1000, 0, {busy});
  CostModel cost = alpha_beta(0.0, 1000.0);
  cost.compute_bandwidth_Bps = 1000.0;
  auto report = simulate(std::move(b).finish(), Topology::ring(2), cost);
  EXPECT_EQ(report.ranks[1][0].finish, 5.0);
  EXPECT_EQ(report.ranks[1][1].issue, 5.0);
  EXPECT_EQ(report.ranks[1][1].finish, 5.0);
}

TEST(Simulate, CompCosts) {
  TraceBuilder b(TraceClass::kCollective, 1, std::nullopt);
  auto r = b.comp(0, comp_op::kReduce, 2000, {});
  auto n = b.comp(0, comp_op::kNop, 0, {r});
  b.comp(0, "GEMM", 3000, {n});
  CostModel cost = alpha_beta(0, 1);
  cost.reduce_bandwidth_Bps = 1000.0;
  cost.fixed_comp_overhead_s = 0.25;
  auto report = simulate(std::move(b).finish(), Topology::ring(1), cost);
  EXPECT_EQ(report.ranks[0][0].finish, 2.25);
  EXPECT_EQ(report.ranks[0][1].finish, 2.25);
  EXPECT_EQ(report.ranks[0][2].finish, 2.5);  // no compute bandwidth: overhead only
}

TEST(Simulate, RejectsUnexpandedCollective) {
  EXPECT_THROW(simulate(load_trace(fixture("workload_n4.json")), Topology::ring(4), alpha_beta(0, 1)),
               UnexpandedCollectiveError);
}

TEST(Simulate, RejectsUnmatchedMessages) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 10, 0, {});
  EXPECT_THROW(simulate(std::move(b).finish(), Topology::ring(2), alpha_beta(0, 1)), MatchError);
}

TEST(Simulate, RejectsTooFewEndpoints) {
  EXPECT_THROW(simulate(generate({Algorithm::kRingAllGather, 4, 64}), Topology::ring(3),
                        alpha_beta(0, 1)),
               SchemaError);
}

TEST(Simulate, RejectsBadCostModel) {
  const Trace t = generate({Algorithm::kRingAllGather, 2, 64});
  EXPECT_THROW(simulate(t, Topology::ring(2), alpha_beta(-1, 1)), SchemaError);
  EXPECT_THROW(simulate(t, Topology::ring(2), alpha_beta(0, 0)), SchemaError);
}

TEST(Simulate, CircularWaitDeadlocks) {
  try {
    simulate(load_trace(fixture("circular_wait.json")), Topology::ring(2), alpha_beta(0, 1));
    FAIL() << "expected DeadlockError";
  } catch (const DeadlockError& e) {
    EXPECT_EQ(e.frontier(), (std::vector<PendingNode>{{0, 0}, {1, 0}}));
  }
}

TEST(Simulate, PlacementChangesPaths) {
  const Trace t = generate({Algorithm::kRingAllGather, 4, 1000});
  Topology scrambled = Topology::ring(4);
  scrambled.set_placement({0, 2, 1, 3});
  const auto cost = alpha_beta(0, 1000);
  EXPECT_GT(simulate(t, scrambled, cost).total_duration,
            simulate(t, Topology::ring(4), cost).total_duration);
}

TEST(NetConfig, ParsesDocumentedKeys) {
  auto cfg = parse_net_config(
      R"({"topology": {"kind": "mesh2d", "rows": 8, "cols": 8}, "alpha_s": 1e-6,
          "bandwidth_Bps": 1e9, "reduce_bandwidth_Bps": null})");
  ASSERT_TRUE(cfg.topology);
  EXPECT_EQ(make_topology(*cfg.topology, 64).describe(), "mesh2d(8x8)");
  EXPECT_EQ(cfg.cost.alpha_s, 1e-6);
  EXPECT_EQ(cfg.cost.bandwidth_Bps, 1e9);
  EXPECT_FALSE(cfg.cost.reduce_bandwidth_Bps);

  auto ring = parse_net_config(R"({"topology": {"kind": "ring", "n": 4}, "alpha_s": 0,
                                   "bandwidth_Bps": 1, "reduce_bandwidth_Bps": 5})");
  EXPECT_EQ(make_topology(*ring.topology, 2).endpoints(), 4u);
  EXPECT_EQ(ring.cost.reduce_bandwidth_Bps, 5.0);
}

TEST(NetConfig, Errors) {
  EXPECT_THROW(parse_net_config(R"({"alpha_s": 0})"), SchemaError);
  EXPECT_THROW(parse_net_config(R"({"alpha_s": 0, "bandwidth_Bps": 1, "speed": 2})"), SchemaError);
  EXPECT_THROW(parse_net_config(R"({"alpha_s": -1, "bandwidth_Bps": 1})"), SchemaError);
  EXPECT_THROW(parse_net_config(R"({"alpha_s": 0, "bandwidth_Bps": 1,
                                    "topology": {"kind": "mesh2d", "n": 4}})"),
               SchemaError);
  EXPECT_THROW(parse_net_config("{"), ParseError);
}

TEST(Report, JsonShape) {
  auto report = simulate(generate({Algorithm::kRingAllGather, 2, 1000}), Topology::ring(2),
                         alpha_beta(0, 1000));
  auto j = nlohmann::json::parse(serialize_report(report, Topology::ring(2)));
  EXPECT_EQ(j["total_duration_s"].get<double>(), 1.0);
  EXPECT_EQ(j["ranks"].size(), 2u);
  EXPECT_EQ(j["ranks"][0]["nodes"].size(), 2u);
  EXPECT_EQ(j["links"].size(), 2u);
  EXPECT_EQ(j["links"][0]["utilization"].get<double>(), 1.0);
}

}  // namespace
}  // namespace collgraph
