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
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "collgraph/simulator.hpp"
#include "collgraph/topology.hpp"
#include "collgraph/trace_io.hpp"

namespace collgraph {

/// Topology section of a network config. `n` is optional for 1D kinds; when
/// absent the trace's rank count is used.
struct TopologyConfig {
  TopologyKind kind = TopologyKind::kRing;
  std::optional<Rank> n;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

struct NetConfig {
  std::optional<TopologyConfig> topology;
  CostModel cost;
};

inline TopologyKind parse_topology_kind(std::string_view s) {
  if (s == "ring") return TopologyKind::kRing;
  if (s == "fully_connected" || s == "fc") return TopologyKind::kFullyConnected;
  if (s == "mesh2d") return TopologyKind::kMesh2D;
  if (s == "torus2d") return TopologyKind::kTorus2D;
  if (s == "switch") return TopologyKind::kSwitch;
  throw SchemaError("unknown topology kind \"" + std::string(s) + "\"");
}

/// Parses {"topology": {...}, "alpha_s", "bandwidth_Bps", "reduce_bandwidth_Bps",
/// "compute_bandwidth_Bps", "comp_overhead_s"}. Unknown keys are rejected.
inline NetConfig parse_net_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("network config: ") + e.what(), 0, 0);
  }
  if (!j.is_object()) throw SchemaError("network config must be an object");
  static const std::set<std::string> known = {"topology",          "alpha_s",
                                              "bandwidth_Bps",     "reduce_bandwidth_Bps",
                                              "compute_bandwidth_Bps", "comp_overhead_s"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw SchemaError("unknown network config key \"" + it.key() + "\"");

  auto number = [&](const char* key, bool required) -> std::optional<double> {
    if (!j.contains(key) || j[key].is_null()) {
      if (required) throw SchemaError(std::string("network config needs \"") + key + "\"");
      return std::nullopt;
    }
    if (!j[key].is_number()) throw SchemaError(std::string("\"") + key + "\" must be a number");
    return j[key].get<double>();
  };

  NetConfig cfg;
  cfg.cost.alpha_s = *number("alpha_s", true);
  cfg.cost.bandwidth_Bps = *number("bandwidth_Bps", true);
  cfg.cost.reduce_bandwidth_Bps = number("reduce_bandwidth_Bps", false);
  cfg.cost.compute_bandwidth_Bps = number("compute_bandwidth_Bps", false);
  cfg.cost.fixed_comp_overhead_s = number("comp_overhead_s", false).value_or(0.0);
  cfg.cost.check();

  if (j.contains("topology")) {
    const auto& t = j["topology"];
    if (!t.is_object() || !t.contains("kind") || !t["kind"].is_string())
      throw SchemaError("\"topology\" needs a string \"kind\"");
    TopologyConfig tc;
    tc.kind = parse_topology_kind(t["kind"].get<std::string>());
    auto dim = [&](const char* key) -> std::uint32_t {
      if (!t.contains(key) || !t[key].is_number_unsigned() || t[key].get<std::uint64_t>() == 0 ||
          t[key].get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max())
        throw SchemaError(std::string("topology \"") + key + "\" must be a positive integer");
      return static_cast<std::uint32_t>(t[key].get<std::uint64_t>());
    };
    const bool two_d = tc.kind == TopologyKind::kMesh2D || tc.kind == TopologyKind::kTorus2D;
    for (auto it = t.begin(); it != t.end(); ++it) {
      const auto& k = it.key();
      if (k == "kind" || (two_d && (k == "rows" || k == "cols")) || (!two_d && k == "n")) continue;
      throw SchemaError("unexpected topology key \"" + k + "\"");
    }
    if (two_d) {
      tc.rows = dim("rows");
      tc.cols = dim("cols");
    } else if (t.contains("n")) {
      tc.n = dim("n");
    }
    cfg.topology = tc;
  }
  return cfg;
}

inline NetConfig load_net_config(const std::filesystem::path& path) {
  return parse_net_config(read_file(path));
}

/// Builds the configured topology; 1D kinds without `n` size to `num_ranks`.
inline Topology make_topology(const TopologyConfig& tc, Rank num_ranks) {
  switch (tc.kind) {
    case TopologyKind::kRing: return Topology::ring(tc.n.value_or(num_ranks));
    case TopologyKind::kFullyConnected: return Topology::fully_connected(tc.n.value_or(num_ranks));
    case TopologyKind::kSwitch: return Topology::switched(tc.n.value_or(num_ranks));
    case TopologyKind::kMesh2D: return Topology::mesh2d(tc.rows, tc.cols);
    case TopologyKind::kTorus2D: return Topology::torus2d(tc.rows, tc.cols);
  }
  throw SchemaError("unknown topology kind");
}

/// Report JSON with a fixed key order. Doubles are written in the shortest
/// form that round-trips, so equal reports give equal bytes.
inline std::string serialize_report(const SimReport& report, const Topology& topo) {
  using ojson = nlohmann::ordered_json;
  ojson out;
  out["topology"] = topo.describe();
  out["total_duration_s"] = report.total_duration;
  out["event_count"] = report.event_count;
  ojson ranks = ojson::array();
  for (std::size_t r = 0; r < report.ranks.size(); ++r) {
    ojson nodes = ojson::array();
    for (const auto& t : report.ranks[r]) {
      ojson n;
      n["id"] = t.id;
      n["issue_s"] = t.issue;
      n["start_s"] = t.start;
      n["finish_s"] = t.finish;
      nodes.push_back(std::move(n));
    }
    ojson rank;
    rank["rank"] = r;
    rank["nodes"] = std::move(nodes);
    ranks.push_back(std::move(rank));
  }
  out["ranks"] = std::move(ranks);
  ojson links = ojson::array();
  for (const auto& l : report.links) {
    ojson e;
    e["src"] = l.link.src;
    e["dst"] = l.link.dst;
    e["busy_s"] = l.busy_s;
    e["messages"] = l.messages;
    e["utilization"] = report.total_duration > 0 ? l.busy_s / report.total_duration : 0.0;
    links.push_back(std::move(e));
  }
  out["links"] = std::move(links);
  return out.dump(2) + "\n";
}

}  // namespace collgraph
