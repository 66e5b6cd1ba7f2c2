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

#include <optional>
#include <string>
#include <string_view>

#include "collgraph/trace.hpp"

namespace collgraph {

enum class Algorithm { kRingAllReduce, kRingAllGather, kRecursiveDoublingAllGather };

inline std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::kRingAllReduce: return "ring-allreduce";
    case Algorithm::kRingAllGather: return "ring-allgather";
    case Algorithm::kRecursiveDoublingAllGather: return "rd-allgather";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "ring-allreduce") return Algorithm::kRingAllReduce;
  if (s == "ring-allgather") return Algorithm::kRingAllGather;
  if (s == "rd-allgather") return Algorithm::kRecursiveDoublingAllGather;
  return std::nullopt;
}

inline CollectiveKind collective_of(Algorithm algo) {
  return algo == Algorithm::kRingAllReduce ? CollectiveKind::kAllReduce
                                           : CollectiveKind::kAllGather;
}

struct AlgoSpec {
  Algorithm algorithm = Algorithm::kRingAllReduce;
  Rank num_ranks = 1;
  Bytes comm_size = 0;
};

inline bool is_power_of_two(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline void check_spec(const AlgoSpec& spec) {
  if (spec.num_ranks == 0) throw SpecError("num_ranks must be at least 1");
  if (spec.num_ranks > 1 && spec.comm_size == 0) throw SpecError("comm_size must be positive");
  switch (spec.algorithm) {
    case Algorithm::kRingAllReduce:
      if (spec.comm_size % spec.num_ranks != 0)
        throw SpecError("ring all-reduce needs comm_size (" + std::to_string(spec.comm_size) +
                        ") divisible by num_ranks (" + std::to_string(spec.num_ranks) + ")");
      break;
    case Algorithm::kRingAllGather:
      break;
    case Algorithm::kRecursiveDoublingAllGather:
      if (!is_power_of_two(spec.num_ranks))
        throw SpecError("recursive doubling needs a power-of-two num_ranks, got " +
                        std::to_string(spec.num_ranks));
      break;
  }
}

namespace detail {

inline Rank ring_sub(Rank r, std::uint64_t k, Rank n) {
  return static_cast<Rank>((r + n - k % n) % n);
}

// Unidirectional ring. Reduce-scatter step k: rank r sends chunk r-k to r+1
// and folds chunk r-k-1 arriving from r-1. All-gather step k then forwards
// the reduced chunk r+1-k. Sends and receives each form one in-order stream
// per peer; on top of that, a send depends on the node that produced the
// chunk it carries.
inline Trace ring_all_reduce(Rank n, Bytes size) {
  TraceBuilder b(TraceClass::kCollective, n, ClaimedCollective{CollectiveKind::kAllReduce, size});
  if (n == 1) return std::move(b).finish();
  const Bytes chunk = size / n;
  for (Rank r = 0; r < n; ++r) {
    const Rank next = (r + 1) % n;
    const Rank prev = (r + n - 1) % n;
    Tag send_tag = 0, recv_tag = 0;
    std::optional<NodeId> last_send, last_recv_side, producer;

    auto deps_of = [](std::initializer_list<std::optional<NodeId>> ids) {
      std::vector<NodeId> out;
      for (const auto& id : ids)
        if (id && std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
      return out;
    };

    for (Rank k = 0; k + 1 < n; ++k) {
      const ChunkIndex out_chunk = ring_sub(r, k, n);
      const ChunkIndex in_chunk = ring_sub(r, k + 1, n);
      last_send = b.send(r, next, chunk, send_tag++, deps_of({last_send, producer}), ChunkList{out_chunk});
      NodeId rv = b.recv(r, prev, chunk, recv_tag++, deps_of({last_recv_side}), ChunkList{in_chunk});
      NodeId red = b.comp(r, comp_op::kReduce, chunk, {rv}, ChunkList{in_chunk});
      last_recv_side = red;
      producer = red;
    }
    for (Rank k = 0; k + 1 < n; ++k) {
      const ChunkIndex out_chunk = ring_sub(r + 1, k, n);
      const ChunkIndex in_chunk = ring_sub(r, k, n);
      last_send = b.send(r, next, chunk, send_tag++, deps_of({last_send, producer}), ChunkList{out_chunk});
      NodeId rv = b.recv(r, prev, chunk, recv_tag++, deps_of({last_recv_side}), ChunkList{in_chunk});
      last_recv_side = rv;
      producer = rv;
    }
  }
  return std::move(b).finish();
}

// Rank r owns chunk r and forwards chunk r-k at step k.
inline Trace ring_all_gather(Rank n, Bytes size) {
  TraceBuilder b(TraceClass::kCollective, n, ClaimedCollective{CollectiveKind::kAllGather, size});
  if (n == 1) return std::move(b).finish();
  for (Rank r = 0; r < n; ++r) {
    const Rank next = (r + 1) % n;
    const Rank prev = (r + n - 1) % n;
    std::optional<NodeId> last_send, last_recv;
    for (Rank k = 0; k + 1 < n; ++k) {
      std::vector<NodeId> send_deps;
      if (last_send) send_deps.push_back(*last_send);
      if (last_recv) send_deps.push_back(*last_recv);
      last_send = b.send(r, next, size, k, std::move(send_deps), ChunkList{ring_sub(r, k, n)});
      std::vector<NodeId> recv_deps;
      if (last_recv) recv_deps.push_back(*last_recv);
      last_recv = b.recv(r, prev, size, k, std::move(recv_deps), ChunkList{ring_sub(r, k + 1, n)});
    }
  }
  return std::move(b).finish();
}

// Round j pairs r with r xor 2^j; each side ships the 2^j chunks it holds.
inline Trace recursive_doubling_all_gather(Rank n, Bytes size) {
  TraceBuilder b(TraceClass::kCollective, n, ClaimedCollective{CollectiveKind::kAllGather, size});
  for (Rank r = 0; r < n; ++r) {
    std::optional<NodeId> last_send, last_recv;
    Tag round = 0;
    for (Rank span = 1; span < n; span <<= 1, ++round) {
      const Rank peer = r ^ span;
      auto block = [span](Rank owner) {
        ChunkList chunks;
        const Rank base = owner & ~(span - 1);
        for (Rank c = 0; c < span; ++c) chunks.push_back(base + c);
        return chunks;
      };
      std::vector<NodeId> send_deps;
      if (last_send) send_deps.push_back(*last_send);
      if (last_recv) send_deps.push_back(*last_recv);
      last_send = b.send(r, peer, size * span, round, std::move(send_deps), block(r));
      std::vector<NodeId> recv_deps;
      if (last_recv) recv_deps.push_back(*last_recv);
      last_recv = b.recv(r, peer, size * span, round, std::move(recv_deps), block(peer));
    }
  }
  return std::move(b).finish();
}

}  // namespace detail

/// Builds the collective trace for a named algorithm. Chunk metadata is
/// attached to every node so that the result can be checked semantically.
inline Trace generate(const AlgoSpec& spec) {
  check_spec(spec);
  switch (spec.algorithm) {
    case Algorithm::kRingAllReduce: return detail::ring_all_reduce(spec.num_ranks, spec.comm_size);
    case Algorithm::kRingAllGather: return detail::ring_all_gather(spec.num_ranks, spec.comm_size);
    case Algorithm::kRecursiveDoublingAllGather:
      return detail::recursive_doubling_all_gather(spec.num_ranks, spec.comm_size);
  }
  throw SpecError("unknown algorithm");
}

}  // namespace collgraph
