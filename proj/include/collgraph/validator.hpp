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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "collgraph/trace.hpp"

namespace collgraph {

/// One contribution to a buffer slot: data that started as chunk `chunk` on
/// rank `origin`.
struct Contribution {
  Rank origin = 0;
  ChunkIndex chunk = 0;

  friend bool operator==(const Contribution&, const Contribution&) = default;
  friend auto operator<=>(const Contribution&, const Contribution&) = default;
};

/// Sorted, duplicate-free. Reduction is set union.
using ContributionSet = std::vector<Contribution>;

inline ContributionSet merge(const ContributionSet& a, const ContributionSet& b) {
  ContributionSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

/// Symbolic contents of every rank's buffer. Unwritten slots are absent.
struct ChunkState {
  std::vector<std::map<ChunkIndex, ContributionSet>> ranks;

  friend bool operator==(const ChunkState&, const ChunkState&) = default;
};

struct Violation {
  Rank rank = 0;
  std::optional<ChunkIndex> chunk;
  std::optional<NodeId> node;
  ContributionSet expected;
  ContributionSet actual;
  std::string message;
};

enum class VerdictStatus { kPass, kFail, kSkipped };

inline std::string_view to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::kPass: return "PASS";
    case VerdictStatus::kFail: return "FAIL";
    case VerdictStatus::kSkipped: return "SKIPPED";
  }
  return "?";
}

struct Verdict {
  VerdictStatus status = VerdictStatus::kSkipped;
  std::vector<Violation> violations;
  std::vector<std::string> warnings;
  ChunkState final_state;
};

/// Picks which executable node runs next; receives the count of candidates
/// (ordered by rank, then id) and returns an index into them.
using ScheduleChooser = std::function<std::size_t(std::size_t)>;

struct ValidateOptions {
  /// Default: always the first candidate.
  ScheduleChooser chooser;
  /// Also replay under rendezvous semantics and warn if that deadlocks.
  bool check_rendezvous = true;
};

namespace detail {

/// Number of buffer chunks the collective works on: a multiple of the rank
/// count, large enough for every chunk index mentioned in the trace.
inline ChunkIndex chunk_space(const Trace& trace) {
  ChunkIndex max_seen = 0;
  bool any = false;
  auto see = [&](const std::optional<ChunkList>& chunks) {
    if (!chunks) return;
    for (auto c : *chunks) {
      max_seen = std::max(max_seen, c);
      any = true;
    }
  };
  for (const auto& nodes : trace.ranks)
    for (const auto& n : nodes) {
      if (const auto* s = n.send()) see(s->chunks);
      else if (const auto* r = n.recv()) see(r->chunks);
      else if (const auto* c = n.comp()) see(c->chunks);
    }
  const ChunkIndex n = trace.num_ranks;
  if (trace.claimed_collective && trace.claimed_collective->kind == CollectiveKind::kBroadcast)
    return any ? max_seen + 1 : 1;
  if (!any) return n;
  return ((max_seen + 1 + n - 1) / n) * n;
}

inline ChunkState initial_state(CollectiveKind kind, Rank n, ChunkIndex chunks) {
  ChunkState s;
  s.ranks.resize(n);
  const ChunkIndex per_rank = chunks / n;
  for (Rank r = 0; r < n; ++r) {
    switch (kind) {
      case CollectiveKind::kAllReduce:
      case CollectiveKind::kReduceScatter:
        for (ChunkIndex c = 0; c < chunks; ++c) s.ranks[r][c] = {{r, c}};
        break;
      case CollectiveKind::kAllGather:
        for (ChunkIndex c = r * per_rank; c < (r + 1) * per_rank; ++c) s.ranks[r][c] = {{r, c}};
        break;
      case CollectiveKind::kBroadcast:
        if (r == 0)
          for (ChunkIndex c = 0; c < chunks; ++c) s.ranks[r][c] = {{0, c}};
        break;
    }
  }
  return s;
}

/// Expected contents per (rank, chunk); slots without an entry are unconstrained.
inline std::vector<std::map<ChunkIndex, ContributionSet>> expected_state(CollectiveKind kind, Rank n,
                                                                         ChunkIndex chunks) {
  std::vector<std::map<ChunkIndex, ContributionSet>> out(n);
  const ChunkIndex per_rank = chunks / n;
  auto reduced = [&](ChunkIndex c) {
    ContributionSet all;
    for (Rank r = 0; r < n; ++r) all.push_back({r, c});
    return all;
  };
  for (Rank r = 0; r < n; ++r) {
    for (ChunkIndex c = 0; c < chunks; ++c) {
      switch (kind) {
        case CollectiveKind::kAllReduce: out[r][c] = reduced(c); break;
        case CollectiveKind::kAllGather: out[r][c] = {{c / per_rank, c}}; break;
        case CollectiveKind::kReduceScatter:
          if (c / per_rank == r) out[r][c] = reduced(c);
          break;
        case CollectiveKind::kBroadcast: out[r][c] = {{0, c}}; break;
      }
    }
  }
  return out;
}

enum class Semantics { kEager, kRendezvous };

struct ExecutionResult {
  bool stuck = false;
  std::vector<PendingNode> frontier;
  ChunkState state;
  std::vector<Violation> violations;
};

/// Runs every rank to quiescence. With `apply_data` false only executability
/// is tracked.
inline ExecutionResult execute(const Trace& trace, Semantics semantics, ChunkState state,
                               bool apply_data, const ScheduleChooser& chooser) {
  const Rank n = trace.num_ranks;
  state.ranks.resize(n);
  struct NodeRef {
    Rank rank;
    std::size_t index;
  };
  using MsgKey = std::tuple<Rank, Rank, Tag>;

  std::vector<std::unordered_map<NodeId, std::size_t>> index(n);
  std::vector<std::vector<std::size_t>> pending(n);
  std::vector<std::vector<std::vector<std::size_t>>> users(n);
  std::vector<std::vector<bool>> done(n);
  // Receive chunks that a dependent REDUCE/COPY folds in, rather than the
  // receive overwriting the slot itself.
  std::vector<std::vector<std::set<ChunkIndex>>> folded(n);
  std::map<MsgKey, NodeRef> send_of, recv_of;

  std::size_t remaining = 0;
  for (Rank r = 0; r < n; ++r) {
    const auto& nodes = trace.ranks[r];
    index[r] = index_by_id(nodes);
    pending[r].assign(nodes.size(), 0);
    users[r].assign(nodes.size(), {});
    done[r].assign(nodes.size(), false);
    folded[r].assign(nodes.size(), {});
    remaining += nodes.size();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& node = nodes[i];
      for (NodeId d : node.deps) {
        auto it = index[r].find(d);
        if (it == index[r].end()) continue;
        users[r][it->second].push_back(i);
        ++pending[r][i];
        const auto* c = node.comp();
        const auto* dep_recv = nodes[it->second].recv();
        if (c && dep_recv && dep_recv->chunks && c->chunks &&
            (c->op == comp_op::kReduce || c->op == comp_op::kCopy))
          for (auto ch : *c->chunks) folded[r][it->second].insert(ch);
      }
      if (const auto* s = node.send()) send_of.emplace(MsgKey{r, s->dst_rank, s->tag}, NodeRef{r, i});
      if (const auto* v = node.recv()) recv_of.emplace(MsgKey{v->src_rank, r, v->tag}, NodeRef{r, i});
    }
  }

  // Payload of each completed send, one set per listed chunk.
  std::map<MsgKey, std::vector<ContributionSet>> sent;
  // Receive payloads by chunk, kept for dependent REDUCE/COPY nodes.
  std::vector<std::vector<std::map<ChunkIndex, ContributionSet>>> inbox(n);
  for (Rank r = 0; r < n; ++r) inbox[r].assign(trace.ranks[r].size(), {});

  ExecutionResult result;
  auto complete = [&](Rank r, std::size_t i) {
    done[r][i] = true;
    --remaining;
    for (std::size_t u : users[r][i]) --pending[r][u];
  };

  auto run_send = [&](Rank r, std::size_t i) {
    const auto& node = trace.ranks[r][i];
    const auto* s = node.send();
    std::vector<ContributionSet> payload;
    if (apply_data && s->chunks)
      for (auto c : *s->chunks) {
        auto it = state.ranks[r].find(c);
        payload.push_back(it == state.ranks[r].end() ? ContributionSet{} : it->second);
      }
    sent[MsgKey{r, s->dst_rank, s->tag}] = std::move(payload);
  };

  auto run_recv = [&](Rank r, std::size_t i) {
    const auto& node = trace.ranks[r][i];
    const auto* v = node.recv();
    const auto& payload = sent.at(MsgKey{v->src_rank, r, v->tag});
    if (!apply_data || !v->chunks) return;
    if (payload.size() != v->chunks->size()) {
      result.violations.push_back({r, std::nullopt, node.id, {}, {},
                                   "receive lists " + std::to_string(v->chunks->size()) +
                                       " chunk(s) but the matching send carries " +
                                       std::to_string(payload.size())});
      return;
    }
    for (std::size_t k = 0; k < payload.size(); ++k) {
      const ChunkIndex c = (*v->chunks)[k];
      inbox[r][i][c] = payload[k];
      if (!folded[r][i].count(c)) state.ranks[r][c] = payload[k];
    }
  };

  auto run_comp = [&](Rank r, std::size_t i) {
    const auto& node = trace.ranks[r][i];
    const auto* c = node.comp();
    if (!apply_data || !c->chunks) return;
    const bool reduce = c->op == comp_op::kReduce;
    const bool copy = c->op == comp_op::kCopy;
    if (!reduce && !copy) return;
    for (auto ch : *c->chunks) {
      ContributionSet incoming;
      bool have_incoming = false;
      for (NodeId d : node.deps) {
        auto di = index[r].at(d);
        auto it = inbox[r][di].find(ch);
        if (it == inbox[r][di].end()) continue;
        incoming = merge(incoming, it->second);
        have_incoming = true;
      }
      if (!have_incoming) continue;
      if (reduce) {
        auto& slot = state.ranks[r][ch];
        slot = merge(slot, incoming);
      } else {
        state.ranks[r][ch] = incoming;
      }
    }
  };

  std::vector<NodeRef> candidates;
  while (remaining > 0) {
    candidates.clear();
    for (Rank r = 0; r < n; ++r) {
      const auto& nodes = trace.ranks[r];
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (done[r][i] || pending[r][i] != 0) continue;
        const auto& node = nodes[i];
        if (const auto* v = node.recv()) {
          MsgKey key{v->src_rank, r, v->tag};
          if (semantics == Semantics::kEager) {
            if (!sent.count(key)) continue;
          } else {
            // Rendezvous: the pair fires together once both sides are ready.
            auto it = send_of.find(key);
            if (it == send_of.end()) continue;
            const auto [sr, si] = it->second;
            if (done[sr][si] || pending[sr][si] != 0) continue;
          }
        } else if (const auto* s = node.send(); s && semantics == Semantics::kRendezvous) {
          continue;  // fired by its receive
        }
        candidates.push_back({r, i});
      }
    }
    if (candidates.empty()) {
      result.stuck = true;
      for (Rank r = 0; r < n; ++r)
        for (std::size_t i = 0; i < trace.ranks[r].size(); ++i)
          if (!done[r][i] && pending[r][i] == 0) result.frontier.push_back({r, trace.ranks[r][i].id});
      std::sort(result.frontier.begin(), result.frontier.end());
      break;
    }
    const std::size_t pick = chooser ? chooser(candidates.size()) : 0;
    const auto [r, i] = candidates.at(pick);
    const auto& node = trace.ranks[r][i];
    switch (node.kind()) {
      case NodeKind::kCommSend:
        run_send(r, i);
        complete(r, i);
        break;
      case NodeKind::kCommRecv:
        if (semantics == Semantics::kRendezvous) {
          const auto* v = node.recv();
          const auto [sr, si] = send_of.at(MsgKey{v->src_rank, r, v->tag});
          run_send(sr, si);
          complete(sr, si);
        }
        run_recv(r, i);
        complete(r, i);
        break;
      case NodeKind::kComp:
        run_comp(r, i);
        complete(r, i);
        break;
      case NodeKind::kCommColl:
        complete(r, i);
        break;
    }
  }
  result.state = std::move(state);
  return result;
}

inline bool has_chunk_metadata(const Trace& trace) {
  for (const auto& nodes : trace.ranks)
    for (const auto& n : nodes) {
      if (const auto* s = n.send(); s && !s->chunks) return false;
      if (const auto* v = n.recv(); v && !v->chunks) return false;
    }
  return true;
}

}  // namespace detail

/// Symbolically executes the trace under eager-send semantics and compares
/// the final buffers against the claimed collective. Throws StuckError when
/// some node can never run. Matching problems are reported as violations.
/// Without a claimed collective or chunk metadata the verdict is SKIPPED
/// unless matching already failed.
inline Verdict check_semantics(const Trace& trace, const ValidateOptions& options = {}) {
  Verdict verdict;
  const bool semantic = trace.claimed_collective.has_value() && detail::has_chunk_metadata(trace) &&
                        trace.trace_class == TraceClass::kCollective;
  const ChunkIndex chunks = detail::chunk_space(trace);
  ChunkState init;
  if (semantic)
    init = detail::initial_state(trace.claimed_collective->kind, trace.num_ranks, chunks);

  auto run = detail::execute(trace, detail::Semantics::kEager, std::move(init), semantic,
                             options.chooser);
  if (run.stuck) throw StuckError(std::move(run.frontier));

  for (const auto& m : find_matching_violations(trace))
    verdict.violations.push_back({m.rank, std::nullopt, m.id, {}, {}, m.message});
  for (auto& v : run.violations) verdict.violations.push_back(std::move(v));

  if (semantic) {
    const auto expected =
        detail::expected_state(trace.claimed_collective->kind, trace.num_ranks, chunks);
    for (Rank r = 0; r < trace.num_ranks; ++r)
      for (const auto& [c, want] : expected[r]) {
        auto it = run.state.ranks[r].find(c);
        ContributionSet have = it == run.state.ranks[r].end() ? ContributionSet{} : it->second;
        if (have != want)
          verdict.violations.push_back({r, c, std::nullopt, want, have,
                                        "rank " + std::to_string(r) + " chunk " + std::to_string(c) +
                                            " holds the wrong contributions"});
      }
  }
  verdict.final_state = std::move(run.state);

  if (!verdict.violations.empty()) {
    verdict.status = VerdictStatus::kFail;
  } else {
    verdict.status = semantic ? VerdictStatus::kPass : VerdictStatus::kSkipped;
  }

  if (options.check_rendezvous) {
    auto strict = detail::execute(trace, detail::Semantics::kRendezvous, {}, false, nullptr);
    if (strict.stuck)
      verdict.warnings.push_back("deadlocks under rendezvous semantics; frontier " +
                                 render_pending(strict.frontier));
  }
  return verdict;
}

// ---------------------------------------------------------------------------
// Isomorphism by canonical form.

struct CanonicalNode {
  NodeKind kind;
  Rank peer = 0;
  Bytes size = 0;
  std::size_t tag_order = 0;
  std::string op;
  std::optional<ChunkList> chunks;
  std::optional<CollectiveKind> coll;
  std::vector<std::size_t> deps;  // canonical positions

  friend bool operator==(const CanonicalNode&, const CanonicalNode&) = default;
  friend auto operator<=>(const CanonicalNode& a, const CanonicalNode& b) {
    return std::tie(a.kind, a.peer, a.size, a.tag_order, a.op, a.chunks, a.coll, a.deps) <=>
           std::tie(b.kind, b.peer, b.size, b.tag_order, b.op, b.chunks, b.coll, b.deps);
  }
};

struct CanonicalTrace {
  Rank num_ranks = 0;
  std::optional<ClaimedCollective> claimed_collective;
  std::vector<std::vector<CanonicalNode>> ranks;

  friend bool operator==(const CanonicalTrace&, const CanonicalTrace&) = default;
};

/// Relabels every rank's nodes in topological order, choosing among ready
/// nodes by (kind, peer, size, tag order, ...). Names, ids and raw tag
/// values drop out; tags survive only as their rank within their stream.
inline CanonicalTrace canonicalize(const Trace& trace) {
  // Tag order within each directed (src, dst) stream, per side.
  std::map<std::pair<Rank, Rank>, std::vector<Tag>> send_tags, recv_tags;
  for (Rank r = 0; r < trace.ranks.size(); ++r)
    for (const auto& n : trace.ranks[r]) {
      if (const auto* s = n.send()) send_tags[{r, s->dst_rank}].push_back(s->tag);
      if (const auto* v = n.recv()) recv_tags[{v->src_rank, r}].push_back(v->tag);
    }
  for (auto* m : {&send_tags, &recv_tags})
    for (auto& [_, tags] : *m) std::sort(tags.begin(), tags.end());
  auto order_of = [](const std::vector<Tag>& tags, Tag t) {
    return static_cast<std::size_t>(std::lower_bound(tags.begin(), tags.end(), t) - tags.begin());
  };

  CanonicalTrace out;
  out.num_ranks = trace.num_ranks;
  out.claimed_collective = trace.claimed_collective;
  for (Rank r = 0; r < trace.ranks.size(); ++r) {
    const auto& nodes = trace.ranks[r];
    auto [topo, cycle] = detail::toposort_nodes(nodes);
    if (!cycle.empty()) throw CycleError(r, std::move(cycle));
    auto index = index_by_id(nodes);

    std::vector<std::size_t> pending(nodes.size(), 0);
    std::vector<std::vector<std::size_t>> users(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (NodeId d : nodes[i].deps) {
        users[index.at(d)].push_back(i);
        ++pending[i];
      }
    std::vector<std::size_t> position(nodes.size(), 0);
    auto describe = [&](std::size_t i) {
      const auto& n = nodes[i];
      CanonicalNode c;
      c.kind = n.kind();
      if (const auto* s = n.send()) {
        c.peer = s->dst_rank;
        c.size = s->comm_size;
        c.tag_order = order_of(send_tags[{r, s->dst_rank}], s->tag);
        c.chunks = s->chunks;
      } else if (const auto* v = n.recv()) {
        c.peer = v->src_rank;
        c.size = v->comm_size;
        c.tag_order = order_of(recv_tags[{v->src_rank, r}], v->tag);
        c.chunks = v->chunks;
      } else if (const auto* p = n.comp()) {
        c.size = p->comp_size;
        c.op = p->op;
        c.chunks = p->chunks;
      } else if (const auto* k = n.coll()) {
        c.size = k->comm_size;
        c.coll = k->coll_kind;
      }
      for (NodeId d : n.deps) c.deps.push_back(position[index.at(d)]);
      std::sort(c.deps.begin(), c.deps.end());
      return c;
    };

    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (pending[i] == 0) ready.push_back(i);
    auto& canon = out.ranks.emplace_back();
    while (!ready.empty()) {
      std::size_t best = 0;
      CanonicalNode best_desc = describe(ready[0]);
      for (std::size_t k = 1; k < ready.size(); ++k) {
        CanonicalNode d = describe(ready[k]);
        if (d < best_desc) {
          best = k;
          best_desc = std::move(d);
        }
      }
      const std::size_t i = ready[best];
      ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(best));
      position[i] = canon.size();
      canon.push_back(std::move(best_desc));
      for (std::size_t u : users[i])
        if (--pending[u] == 0) ready.push_back(u);
    }
  }
  return out;
}

inline bool isomorphic(const Trace& a, const Trace& b) {
  if (a.num_ranks != b.num_ranks || a.node_count() != b.node_count()) {
    // Still reject cyclic inputs consistently.
    canonicalize(a);
    canonicalize(b);
    return false;
  }
  return canonicalize(a) == canonicalize(b);
}

}  // namespace collgraph
