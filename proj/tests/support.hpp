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

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "collgraph/collgraph.hpp"

namespace collgraph::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(COLLGRAPH_FIXTURE_DIR) / name;
}

// Closed forms for a unidirectional ring embedded on a ring without contention.
inline double ring_allreduce_time(Rank n, Bytes s, double alpha, double bw) {
  return 2.0 * (n - 1) * (alpha + static_cast<double>(s / n) / bw);
}

inline double ring_allgather_time(Rank n, Bytes s, double alpha, double bw) {
  return (n - 1) * (alpha + static_cast<double>(s) / bw);
}

inline double rel_error(double got, double want) {
  return want == 0.0 ? std::abs(got) : std::abs(got - want) / std::abs(want);
}

inline CostModel alpha_beta(double alpha, double bw) {
  CostModel c;
  c.alpha_s = alpha;
  c.bandwidth_Bps = bw;
  return c;
}

/// Drops one node and every dependency edge that pointed at it.
inline Trace without_node(Trace t, Rank rank, std::size_t index) {
  const NodeId gone = t.ranks[rank][index].id;
  t.ranks[rank].erase(t.ranks[rank].begin() + static_cast<std::ptrdiff_t>(index));
  for (auto& n : t.ranks[rank]) std::erase(n.deps, gone);
  return t;
}

inline std::vector<AlgoSpec> small_specs(Rank max_ranks) {
  std::vector<AlgoSpec> out;
  for (Rank n = 1; n <= max_ranks; ++n) {
    out.push_back({Algorithm::kRingAllReduce, n, Bytes{n} * 1024});
    out.push_back({Algorithm::kRingAllGather, n, 1024});
    if (is_power_of_two(n)) out.push_back({Algorithm::kRecursiveDoublingAllGather, n, 1024});
  }
  return out;
}

inline std::string describe(const AlgoSpec& s) {
  return std::string(to_string(s.algorithm)) + " N=" + std::to_string(s.num_ranks);
}

}  // namespace collgraph::testing
