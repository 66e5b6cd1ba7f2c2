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

#include <algorithm>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

namespace collgraph {
namespace {

using testing::fixture;

Trace two_rank_pair(Tag send_tag, Tag recv_tag) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 64, send_tag, {});
  b.recv(1, 0, 64, recv_tag, {});
  return std::move(b).finish();
}

Trace single_rank(std::vector<TraceNode> nodes) {
  Trace t;
  t.trace_class = TraceClass::kCollective;
  t.num_ranks = 1;
  t.ranks.push_back(std::move(nodes));
  return t;
}

TraceNode comp_node(NodeId id, std::vector<NodeId> deps) {
  return TraceNode{id, "c" + std::to_string(id), std::move(deps), CompAttrs{8, "GEMM", std::nullopt}};
}

TEST(TraceLoad, EmptySingleRankTrace) {
  Trace t = parse_trace(serialize_trace(generate({Algorithm::kRingAllReduce, 1, 4096})));
  EXPECT_EQ(t.num_ranks, 1u);
  EXPECT_EQ(t.node_count(), 0u);
}

TEST(TraceLoad, RoundTripIsStructurallyEqual) {
  for (const auto& spec : testing::small_specs(8)) {
    Trace t = generate(spec);
    EXPECT_EQ(parse_trace(serialize_trace(t)), t) << testing::describe(spec);
  }
}

TEST(TraceLoad, SaveLoadSaveIsByteIdentical) {
  const auto dir = std::filesystem::temp_directory_path() / "collgraph_trace_model_test";
  std::filesystem::create_directories(dir);
  Trace t = generate({Algorithm::kRingAllReduce, 4, 4u << 20});
  save_trace(t, dir / "a.json");
  Trace loaded = load_trace(dir / "a.json");
  save_trace(loaded, dir / "b.json");
  EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
  EXPECT_EQ(read_file(dir / "a.json"), serialize_trace(t));
  std::filesystem::remove_all(dir);
}

TEST(TraceLoad, UnmatchedSendIsInvariantError) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 64, 7, {});
  const std::string text = serialize_trace(std::move(b).finish());
  try {
    parse_trace(text);
    FAIL() << "expected InvariantError";
  } catch (const InvariantError& e) {
    EXPECT_EQ(e.rank(), 0u);
    EXPECT_EQ(e.node_id(), 0u);
  }
}

TEST(TraceLoad, SizeMismatchIsInvariantError) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 64, 0, {});
  b.recv(1, 0, 128, 0, {});
  EXPECT_THROW(parse_trace(serialize_trace(std::move(b).finish())), InvariantError);
}

TEST(TraceLoad, DuplicateTagIsInvariantError) {
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.send(0, 1, 64, 3, {});
  b.send(0, 1, 64, 3, {});
  b.recv(1, 0, 64, 3, {});
  b.recv(1, 0, 64, 3, {});
  EXPECT_THROW(parse_trace(serialize_trace(std::move(b).finish())), InvariantError);
}

TEST(TraceLoad, MatchedPairLoads) {
  EXPECT_NO_THROW(parse_trace(serialize_trace(two_rank_pair(5, 5))));
  EXPECT_THROW(parse_trace(serialize_trace(two_rank_pair(5, 6))), InvariantError);
}

TEST(TraceLoad, MalformedJsonReportsPosition) {
  const std::string text = "{\n  \"format_version\": \"1\",\n  \"num_ranks\": ,\n}\n";
  try {
    parse_trace(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 1u);
  }
}

TEST(TraceLoad, UnknownNodeKindIsSchemaError) {
  std::string text = serialize_trace(two_rank_pair(0, 0));
  text.replace(text.find("COMM_SEND"), 9, "COMM_SNED");
  EXPECT_THROW(parse_trace(text), SchemaError);
}

TEST(TraceLoad, MissingAttributeIsSchemaError) {
  std::string text = serialize_trace(two_rank_pair(0, 0));
  const auto pos = text.find(",\"tag\":0");
  ASSERT_NE(pos, std::string::npos);
  text.erase(pos, 8);
  EXPECT_THROW(parse_trace(text), SchemaError);
}

TEST(TraceLoad, UnknownKeyIsSchemaError) {
  std::string text = serialize_trace(two_rank_pair(0, 0));
  text.replace(text.find("\"num_ranks\""), 11, "\"extra\": 1, \"num_ranks\"");
  EXPECT_THROW(parse_trace(text), SchemaError);
}

TEST(TraceLoad, SelfSendAndBadPeerAreRejected) {
  TraceBuilder a(TraceClass::kCollective, 2, std::nullopt);
  a.send(0, 0, 64, 0, {});
  EXPECT_THROW(check_structure(std::move(a).finish()), InvariantError);
  TraceBuilder b(TraceClass::kCollective, 2, std::nullopt);
  b.recv(1, 2, 64, 0, {});
  EXPECT_THROW(check_structure(std::move(b).finish()), InvariantError);
}

TEST(TraceLoad, CollNodeOnlyInWorkloads) {
  TraceBuilder c(TraceClass::kCollective, 1, std::nullopt);
  c.add(0, "ar", CollAttrs{CollectiveKind::kAllReduce, 64});
  EXPECT_THROW(check_structure(std::move(c).finish()), InvariantError);

  TraceBuilder w(TraceClass::kWorkload, 2, std::nullopt);
  w.send(0, 1, 64, 0, {});
  w.recv(1, 0, 64, 0, {});
  EXPECT_THROW(check_structure(std::move(w).finish()), InvariantError);
}

TEST(TraceLoad, WorkloadCollectiveSequenceMustAgree) {
  TraceBuilder w(TraceClass::kWorkload, 2, std::nullopt);
  w.add(0, "ar", CollAttrs{CollectiveKind::kAllReduce, 64});
  w.add(1, "ar", CollAttrs{CollectiveKind::kAllReduce, 128});
  EXPECT_THROW(check_structure(std::move(w).finish()), InvariantError);

  TraceBuilder ok(TraceClass::kWorkload, 2, std::nullopt);
  for (Rank r = 0; r < 2; ++r) {
    auto c = ok.comp(r, "GEMM", 10, {});
    ok.add(r, "ar", CollAttrs{CollectiveKind::kAllReduce, 64}, {c});
  }
  EXPECT_NO_THROW(check_structure(std::move(ok).finish()));
}

TEST(TraceLoad, ZeroSizeCompIsAllowed) {
  TraceBuilder b(TraceClass::kWorkload, 1, std::nullopt);
  b.comp(0, "NOP", 0, {});
  EXPECT_NO_THROW(check_invariants(std::move(b).finish()));
}

TEST(TraceLoad, FixturesLoad) {
  EXPECT_EQ(load_trace(fixture("workload_n4.json")).trace_class, TraceClass::kWorkload);
  EXPECT_EQ(load_trace(fixture("workload_no_coll.json")).node_count(), 2u);
  EXPECT_EQ(load_trace(fixture("circular_wait.json")).node_count(), 4u);
}

TEST(TraceLoad, MissingFileIsIoError) {
  EXPECT_THROW(load_trace("/nonexistent/collgraph/trace.json"), IoError);
}

// Deleting any one SEND or RECV breaks matching completeness.
TEST(TraceLoad, SingleCommDeletionAlwaysRejected) {
  for (const auto& spec : testing::small_specs(6)) {
    const Trace t = generate(spec);
    for (Rank r = 0; r < t.num_ranks; ++r)
      for (std::size_t i = 0; i < t.ranks[r].size(); ++i) {
        const auto kind = t.ranks[r][i].kind();
        if (kind != NodeKind::kCommSend && kind != NodeKind::kCommRecv) continue;
        Trace cut = testing::without_node(t, r, i);
        EXPECT_THROW(parse_trace(serialize_trace(cut)), InvariantError)
            << testing::describe(spec) << " rank " << r << " index " << i;
      }
  }
}

TEST(TraceSave, CanonicalLayout) {
  const std::string expected =
      "{\n"
      "  \"format_version\": \"1\",\n"
      "  \"trace_class\": \"collective\",\n"
      "  \"num_ranks\": 1,\n"
      "  \"claimed_collective\": {\"kind\":\"ALL_REDUCE\",\"comm_size\":1024},\n"
      "  \"ranks\": [\n"
      "    []\n"
      "  ]\n"
      "}\n";
  EXPECT_EQ(serialize_trace(generate({Algorithm::kRingAllReduce, 1, 1024})), expected);
}

TEST(TraceSave, OneNodePerLineInKeyOrder) {
  const std::string text = serialize_trace(two_rank_pair(9, 9));
  EXPECT_NE(text.find("      {\"id\":0,\"name\":\"send_r1_t9\",\"kind\":\"COMM_SEND\",\"deps\":[],"
                      "\"attrs\":{\"dst_rank\":1,\"comm_size\":64,\"tag\":9}}\n"),
            std::string::npos)
      << text;
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
}

TEST(TraceSave, RefusesCycleBeforeWriting) {
  const auto path = std::filesystem::temp_directory_path() / "collgraph_cycle_refused.json";
  std::filesystem::remove(path);
  Trace t = single_rank({comp_node(0, {1}), comp_node(1, {0})});
  EXPECT_THROW(save_trace(t, path), InvariantError);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(TraceSave, InsertionOrderDoesNotChangeBytes) {
  Trace t = generate({Algorithm::kRingAllReduce, 5, 5 * 512});
  const std::string reference = serialize_trace(t);
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Trace shuffled = t;
    for (auto& nodes : shuffled.ranks) {
      std::shuffle(nodes.begin(), nodes.end(), rng);
      for (auto& n : nodes) std::shuffle(n.deps.begin(), n.deps.end(), rng);
    }
    EXPECT_EQ(serialize_trace(shuffled), reference);
  }
}

TEST(Toposort, Chain) {
  Trace t = single_rank({comp_node(30, {20}), comp_node(10, {}), comp_node(20, {10})});
  EXPECT_EQ(toposort_rank(t, 0), (std::vector<NodeId>{10, 20, 30}));
}

TEST(Toposort, ReadyTieBreakByAscendingId) {
  Trace t = single_rank({comp_node(5, {}), comp_node(2, {})});
  EXPECT_EQ(toposort_rank(t, 0), (std::vector<NodeId>{2, 5}));
}

TEST(Toposort, TwoCycleReportsBothIds) {
  Trace t = single_rank({comp_node(0, {1}), comp_node(1, {0})});
  try {
    toposort_rank(t, 0);
    FAIL() << "expected CycleError";
  } catch (const CycleError& e) {
    auto ids = e.cycle();
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(ids, (std::vector<NodeId>{0, 1}));
  }
}

TEST(Toposort, CycleBehindAcyclicPrefix) {
  Trace t = single_rank({comp_node(0, {}), comp_node(1, {0, 3}), comp_node(2, {1}), comp_node(3, {2})});
  try {
    toposort_rank(t, 0);
    FAIL() << "expected CycleError";
  } catch (const CycleError& e) {
    auto ids = e.cycle();
    std::sort(ids.begin(), ids.end());
    EXPECT_EQ(ids, (std::vector<NodeId>{1, 2, 3}));
  }
}

TEST(Toposort, RankOutOfRange) {
  EXPECT_THROW(toposort_rank(single_rank({}), 1), SchemaError);
}

// Every dependency precedes its user, for every generated rank.
TEST(Toposort, GeneratorOutputOrdersDeps) {
  for (const auto& spec : testing::small_specs(16)) {
    const Trace t = generate(spec);
    for (Rank r = 0; r < t.num_ranks; ++r) {
      const auto order = toposort_rank(t, r);
      ASSERT_EQ(order.size(), t.ranks[r].size());
      std::map<NodeId, std::size_t> pos;
      for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
      for (const auto& n : t.ranks[r])
        for (NodeId d : n.deps) EXPECT_LT(pos.at(d), pos.at(n.id)) << testing::describe(spec);
    }
  }
}

}  // namespace
}  // namespace collgraph
