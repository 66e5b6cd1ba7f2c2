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

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <variant>
#include <vector>

#include "collgraph/errors.hpp"

namespace collgraph {

using Rank = std::uint32_t;
using NodeId = std::uint64_t;
using Bytes = std::uint64_t;
using Tag = std::uint64_t;
using ChunkIndex = std::uint32_t;
using ChunkList = std::vector<ChunkIndex>;

enum class NodeKind { kCommSend, kCommRecv, kComp, kCommColl };

enum class CollectiveKind { kAllReduce, kAllGather, kReduceScatter, kBroadcast };

enum class TraceClass { kCollective, kWorkload };

inline std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kCommSend: return "COMM_SEND";
    case NodeKind::kCommRecv: return "COMM_RECV";
    case NodeKind::kComp: return "COMP";
    case NodeKind::kCommColl: return "COMM_COLL";
  }
  return "?";
}

inline std::string_view to_string(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::kAllReduce: return "ALL_REDUCE";
    case CollectiveKind::kAllGather: return "ALL_GATHER";
    case CollectiveKind::kReduceScatter: return "REDUCE_SCATTER";
    case CollectiveKind::kBroadcast: return "BROADCAST";
  }
  return "?";
}

inline std::string_view to_string(TraceClass cls) {
  return cls == TraceClass::kCollective ? "collective" : "workload";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "COMM_SEND") return NodeKind::kCommSend;
  if (s == "COMM_RECV") return NodeKind::kCommRecv;
  if (s == "COMP") return NodeKind::kComp;
  if (s == "COMM_COLL") return NodeKind::kCommColl;
  return std::nullopt;
}

inline std::optional<CollectiveKind> parse_collective_kind(std::string_view s) {
  if (s == "ALL_REDUCE") return CollectiveKind::kAllReduce;
  if (s == "ALL_GATHER") return CollectiveKind::kAllGather;
  if (s == "REDUCE_SCATTER") return CollectiveKind::kReduceScatter;
  if (s == "BROADCAST") return CollectiveKind::kBroadcast;
  return std::nullopt;
}

/// Well-known COMP operations. Any other string is carried opaquely.
namespace comp_op {
inline constexpr std::string_view kReduce = "REDUCE";
inline constexpr std::string_view kCopy = "COPY";
inline constexpr std::string_view kNop = "NOP";
}  // namespace comp_op

// `chunks` is optional validation metadata: which buffer chunks a node
// transmits, receives or reduces. Traces without it can still be simulated.

struct SendAttrs {
  Rank dst_rank = 0;
  Bytes comm_size = 0;
  Tag tag = 0;
  std::optional<ChunkList> chunks;

  friend bool operator==(const SendAttrs&, const SendAttrs&) = default;
};

struct RecvAttrs {
  Rank src_rank = 0;
  Bytes comm_size = 0;
  Tag tag = 0;
  std::optional<ChunkList> chunks;

  friend bool operator==(const RecvAttrs&, const RecvAttrs&) = default;
};

struct CompAttrs {
  Bytes comp_size = 0;
  std::string op;
  std::optional<ChunkList> chunks;

  friend bool operator==(const CompAttrs&, const CompAttrs&) = default;
};

struct CollAttrs {
  CollectiveKind coll_kind = CollectiveKind::kAllReduce;
  Bytes comm_size = 0;

  friend bool operator==(const CollAttrs&, const CollAttrs&) = default;
};

using NodeAttrs = std::variant<SendAttrs, RecvAttrs, CompAttrs, CollAttrs>;

struct TraceNode {
  NodeId id = 0;
  std::string name;
  std::vector<NodeId> deps;
  NodeAttrs attrs;

  NodeKind kind() const {
    return static_cast<NodeKind>(attrs.index());
  }
  const SendAttrs* send() const { return std::get_if<SendAttrs>(&attrs); }
  const RecvAttrs* recv() const { return std::get_if<RecvAttrs>(&attrs); }
  const CompAttrs* comp() const { return std::get_if<CompAttrs>(&attrs); }
  const CollAttrs* coll() const { return std::get_if<CollAttrs>(&attrs); }

  friend bool operator==(const TraceNode&, const TraceNode&) = default;
};

struct ClaimedCollective {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  Bytes comm_size = 0;

  friend bool operator==(const ClaimedCollective&, const ClaimedCollective&) = default;
};

/// One trace document: a collective algorithm (SEND/RECV/COMP nodes) or a
/// workload (COMP and COMM_COLL placeholders), one node list per rank.
struct Trace {
  TraceClass trace_class = TraceClass::kCollective;
  Rank num_ranks = 1;
  std::optional<ClaimedCollective> claimed_collective;
  std::vector<std::vector<TraceNode>> ranks;

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& r : ranks) n += r.size();
    return n;
  }

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Sorts nodes by id and each dependency list ascending. Every producer calls
/// this before handing a trace out, so structural equality is meaningful.
inline void normalize(Trace& trace) {
  for (auto& nodes : trace.ranks) {
    std::sort(nodes.begin(), nodes.end(),
              [](const TraceNode& a, const TraceNode& b) { return a.id < b.id; });
    for (auto& node : nodes) std::sort(node.deps.begin(), node.deps.end());
  }
}

inline std::unordered_map<NodeId, std::size_t> index_by_id(const std::vector<TraceNode>& nodes) {
  std::unordered_map<NodeId, std::size_t> index;
  index.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i].id, i);
  return index;
}

namespace detail {

// Kahn's algorithm over one rank; ready nodes are released in ascending id.
// Returns the order and, when a cycle blocks progress, the cycle's ids.
inline std::pair<std::vector<NodeId>, std::vector<NodeId>> toposort_nodes(
    const std::vector<TraceNode>& nodes) {
  auto index = index_by_id(nodes);
  std::vector<std::size_t> pending(nodes.size(), 0);
  std::vector<std::vector<std::size_t>> users(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (NodeId dep : nodes[i].deps) {
      auto it = index.find(dep);
      if (it == index.end()) continue;  // dangling deps are reported elsewhere
      users[it->second].push_back(i);
      ++pending[i];
    }
  }
  using Entry = std::pair<NodeId, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (pending[i] == 0) ready.emplace(nodes[i].id, i);

  std::vector<NodeId> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    auto [id, i] = ready.top();
    ready.pop();
    order.push_back(id);
    for (std::size_t u : users[i])
      if (--pending[u] == 0) ready.emplace(nodes[u].id, u);
  }
  if (order.size() == nodes.size()) return {std::move(order), {}};

  // Walk dependency edges among blocked nodes from the smallest blocked id
  // until a node repeats; the repeated suffix is a cycle.
  std::size_t start = nodes.size();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (pending[i] > 0 && (start == nodes.size() || nodes[i].id < nodes[start].id)) start = i;
  std::vector<std::size_t> walk;
  std::unordered_map<std::size_t, std::size_t> seen_at;
  std::size_t cur = start;
  while (!seen_at.count(cur)) {
    seen_at.emplace(cur, walk.size());
    walk.push_back(cur);
    std::size_t next = nodes.size();
    for (NodeId dep : nodes[cur].deps) {
      auto it = index.find(dep);
      if (it != index.end() && pending[it->second] > 0 &&
          (next == nodes.size() || nodes[it->second].id < nodes[next].id))
        next = it->second;
    }
    cur = next;
  }
  std::vector<NodeId> cycle;
  for (std::size_t k = seen_at[cur]; k < walk.size(); ++k) cycle.push_back(nodes[walk[k]].id);
  return {std::move(order), std::move(cycle)};
}

}  // namespace detail

/// Topological order of one rank; ties among ready nodes go to the smaller id.
inline std::vector<NodeId> toposort_rank(const Trace& trace, Rank rank) {
  if (rank >= trace.ranks.size())
    throw SchemaError("rank " + std::to_string(rank) + " out of range");
  auto [order, cycle] = detail::toposort_nodes(trace.ranks[rank]);
  if (!cycle.empty()) throw CycleError(rank, std::move(cycle));
  return order;
}

/// Per-node structural checks: unique ids, same-rank deps, peers, sizes,
/// kinds allowed by the trace class, acyclicity, and workload SPMD shape.
inline void check_structure(const Trace& trace) {
  if (trace.num_ranks == 0) throw SchemaError("num_ranks must be positive");
  if (trace.ranks.size() != trace.num_ranks)
    throw SchemaError("ranks has " + std::to_string(trace.ranks.size()) +
                      " entries, num_ranks is " + std::to_string(trace.num_ranks));
  const bool workload = trace.trace_class == TraceClass::kWorkload;
  if (!workload && trace.claimed_collective &&
      trace.claimed_collective->comm_size == 0 && trace.num_ranks > 1)
    throw SchemaError("claimed_collective.comm_size must be positive");

  for (Rank r = 0; r < trace.num_ranks; ++r) {
    const auto& nodes = trace.ranks[r];
    auto index = index_by_id(nodes);
    if (index.size() != nodes.size()) {
      std::map<NodeId, int> seen;
      for (const auto& n : nodes)
        if (++seen[n.id] > 1) throw InvariantError("duplicate node id", r, n.id);
    }
    for (const auto& n : nodes) {
      for (std::size_t i = 0; i < n.deps.size(); ++i) {
        if (!index.count(n.deps[i]))
          throw InvariantError("dependency on unknown node " + std::to_string(n.deps[i]), r, n.id);
        for (std::size_t j = 0; j < i; ++j)
          if (n.deps[j] == n.deps[i])
            throw InvariantError("duplicate dependency " + std::to_string(n.deps[i]), r, n.id);
      }
      const NodeKind kind = n.kind();
      if (workload && kind != NodeKind::kComp && kind != NodeKind::kCommColl)
        throw InvariantError(std::string(to_string(kind)) + " node in workload trace", r, n.id);
      if (!workload && kind == NodeKind::kCommColl)
        throw InvariantError("COMM_COLL node in collective trace", r, n.id);
      if (const auto* s = n.send()) {
        if (s->dst_rank >= trace.num_ranks) throw InvariantError("dst_rank out of range", r, n.id);
        if (s->dst_rank == r) throw InvariantError("send to own rank", r, n.id);
        if (s->comm_size == 0) throw InvariantError("send comm_size must be positive", r, n.id);
      } else if (const auto* v = n.recv()) {
        if (v->src_rank >= trace.num_ranks) throw InvariantError("src_rank out of range", r, n.id);
        if (v->src_rank == r) throw InvariantError("recv from own rank", r, n.id);
        if (v->comm_size == 0) throw InvariantError("recv comm_size must be positive", r, n.id);
      }
    }
    auto [order, cycle] = detail::toposort_nodes(nodes);
    if (!cycle.empty()) throw CycleError(r, std::move(cycle));
  }

  if (workload) {
    // SPMD: every rank runs the same sequence of collectives.
    auto coll_sequence = [&](Rank r) {
      std::vector<std::pair<CollectiveKind, Bytes>> seq;
      const auto& nodes = trace.ranks[r];
      auto index = index_by_id(nodes);
      for (NodeId id : detail::toposort_nodes(nodes).first)
        if (const auto* c = nodes[index[id]].coll()) seq.emplace_back(c->coll_kind, c->comm_size);
      return seq;
    };
    const auto first = coll_sequence(0);
    for (Rank r = 1; r < trace.num_ranks; ++r)
      if (coll_sequence(r) != first)
        throw InvariantError("collective sequence differs from rank 0", r,
                             trace.ranks[r].empty() ? 0 : trace.ranks[r].front().id);
  }
}

/// One send/recv matching problem found by `find_matching_violations`.
struct MatchViolation {
  enum class Kind { kUnmatchedSend, kUnmatchedRecv, kSizeMismatch, kDuplicateTag };
  Kind kind;
  Rank rank;
  NodeId id;
  std::string message;
};

/// Every SEND must have exactly one RECV with the same (src, dst, tag, size)
/// and tags must be unique per directed pair.
inline std::vector<MatchViolation> find_matching_violations(const Trace& trace) {
  using Key = std::tuple<Rank, Rank, Tag>;  // (src, dst, tag)
  struct Endpoint {
    Rank rank;
    NodeId id;
    Bytes size;
  };
  std::map<Key, Endpoint> sends;
  std::map<Key, Endpoint> recvs;
  std::vector<MatchViolation> out;
  for (Rank r = 0; r < trace.ranks.size(); ++r) {
    for (const auto& n : trace.ranks[r]) {
      if (const auto* s = n.send()) {
        if (!sends.emplace(Key{r, s->dst_rank, s->tag}, Endpoint{r, n.id, s->comm_size}).second)
          out.push_back({MatchViolation::Kind::kDuplicateTag, r, n.id,
                         "duplicate send tag " + std::to_string(s->tag) + " to rank " +
                             std::to_string(s->dst_rank)});
      } else if (const auto* v = n.recv()) {
        if (!recvs.emplace(Key{v->src_rank, r, v->tag}, Endpoint{r, n.id, v->comm_size}).second)
          out.push_back({MatchViolation::Kind::kDuplicateTag, r, n.id,
                         "duplicate recv tag " + std::to_string(v->tag) + " from rank " +
                             std::to_string(v->src_rank)});
      }
    }
  }
  for (const auto& [key, snd] : sends) {
    auto it = recvs.find(key);
    if (it == recvs.end()) {
      out.push_back({MatchViolation::Kind::kUnmatchedSend, snd.rank, snd.id,
                     "unmatched send to rank " + std::to_string(std::get<1>(key)) + " tag " +
                         std::to_string(std::get<2>(key))});
    } else if (it->second.size != snd.size) {
      out.push_back({MatchViolation::Kind::kSizeMismatch, snd.rank, snd.id,
                     "send size " + std::to_string(snd.size) + " != recv size " +
                         std::to_string(it->second.size)});
    }
  }
  for (const auto& [key, rcv] : recvs)
    if (!sends.count(key))
      out.push_back({MatchViolation::Kind::kUnmatchedRecv, rcv.rank, rcv.id,
                     "unmatched recv from rank " + std::to_string(std::get<0>(key)) + " tag " +
                         std::to_string(std::get<2>(key))});
  return out;
}

inline void check_matching(const Trace& trace) {
  auto violations = find_matching_violations(trace);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw InvariantError(v.message, v.rank, v.id);
  }
}

inline void check_invariants(const Trace& trace) {
  check_structure(trace);
  check_matching(trace);
}

/// Incremental construction of a trace. Ids are handed out per rank in
/// insertion order starting at zero.
class TraceBuilder {
 public:
  TraceBuilder(TraceClass cls, Rank num_ranks, std::optional<ClaimedCollective> claimed)
      : next_id_(num_ranks, 0) {
    trace_.trace_class = cls;
    trace_.num_ranks = num_ranks;
    trace_.claimed_collective = claimed;
    trace_.ranks.resize(num_ranks);
  }

  NodeId add(Rank rank, std::string name, NodeAttrs attrs, std::vector<NodeId> deps = {}) {
    NodeId id = next_id_.at(rank)++;
    trace_.ranks[rank].push_back(TraceNode{id, std::move(name), std::move(deps), std::move(attrs)});
    return id;
  }

  NodeId send(Rank rank, Rank dst, Bytes size, Tag tag, std::vector<NodeId> deps,
              std::optional<ChunkList> chunks = std::nullopt) {
    return add(rank, "send_r" + std::to_string(dst) + "_t" + std::to_string(tag),
               SendAttrs{dst, size, tag, std::move(chunks)}, std::move(deps));
  }

  NodeId recv(Rank rank, Rank src, Bytes size, Tag tag, std::vector<NodeId> deps,
              std::optional<ChunkList> chunks = std::nullopt) {
    return add(rank, "recv_r" + std::to_string(src) + "_t" + std::to_string(tag),
               RecvAttrs{src, size, tag, std::move(chunks)}, std::move(deps));
  }

  NodeId comp(Rank rank, std::string_view op, Bytes size, std::vector<NodeId> deps,
              std::optional<ChunkList> chunks = std::nullopt) {
    std::string name(op);
    for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return add(rank, name, CompAttrs{size, std::string(op), std::move(chunks)}, std::move(deps));
  }

  Trace finish() && {
    normalize(trace_);
    return std::move(trace_);
  }

 private:
  Trace trace_;
  std::vector<NodeId> next_id_;
};

}  // namespace collgraph
