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

#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "collgraph/trace.hpp"

namespace collgraph {

using PhysicalNode = std::uint32_t;

enum class TopologyKind { kRing, kFullyConnected, kMesh2D, kTorus2D, kSwitch };

/// Directed physical link.
struct Link {
  PhysicalNode src = 0;
  PhysicalNode dst = 0;

  friend bool operator==(const Link&, const Link&) = default;
  friend auto operator<=>(const Link&, const Link&) = default;
};

/// Physical network plus the rank -> node placement. Links are full duplex:
/// each neighbour pair contributes one link per direction.
class Topology {
 public:
  static Topology ring(Rank n) { return Topology(TopologyKind::kRing, n, 1, n); }
  static Topology fully_connected(Rank n) { return Topology(TopologyKind::kFullyConnected, n, 1, n); }
  static Topology mesh2d(std::uint32_t rows, std::uint32_t cols) {
    return Topology(TopologyKind::kMesh2D, rows * cols, rows, cols);
  }
  static Topology torus2d(std::uint32_t rows, std::uint32_t cols) {
    return Topology(TopologyKind::kTorus2D, rows * cols, rows, cols);
  }
  /// `n` endpoints 0..n-1 attached to one switch node `n`.
  static Topology switched(Rank n) { return Topology(TopologyKind::kSwitch, n, 1, n); }

  TopologyKind kind() const { return kind_; }
  Rank endpoints() const { return endpoints_; }
  std::uint32_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }
  std::size_t node_count() const { return endpoints_ + (kind_ == TopologyKind::kSwitch ? 1 : 0); }
  PhysicalNode switch_node() const { return endpoints_; }

  PhysicalNode node_of(Rank rank) const { return placement_.at(rank); }

  /// Replaces the identity placement. Must be a permutation of the endpoints.
  void set_placement(std::vector<PhysicalNode> placement) {
    if (placement.size() != endpoints_) throw SchemaError("placement size must equal endpoint count");
    std::vector<bool> seen(endpoints_, false);
    for (auto p : placement) {
      if (p >= endpoints_ || seen[p]) throw SchemaError("placement is not a permutation");
      seen[p] = true;
    }
    placement_ = std::move(placement);
  }

  bool has_link(Link l) const {
    const auto n = static_cast<PhysicalNode>(node_count());
    if (l.src >= n || l.dst >= n || l.src == l.dst) return false;
    switch (kind_) {
      case TopologyKind::kRing:
        return l.dst == (l.src + 1) % endpoints_ || l.src == (l.dst + 1) % endpoints_;
      case TopologyKind::kFullyConnected:
        return true;
      case TopologyKind::kSwitch:
        return l.src == switch_node() || l.dst == switch_node();
      case TopologyKind::kMesh2D:
      case TopologyKind::kTorus2D: {
        const auto [r1, c1] = coords(l.src);
        const auto [r2, c2] = coords(l.dst);
        const bool wrap = kind_ == TopologyKind::kTorus2D;
        auto adjacent = [wrap](std::uint32_t a, std::uint32_t b, std::uint32_t extent) {
          if (a + 1 == b || b + 1 == a) return true;
          return wrap && extent > 2 && ((a == 0 && b == extent - 1) || (b == 0 && a == extent - 1));
        };
        return (r1 == r2 && adjacent(c1, c2, cols_)) || (c1 == c2 && adjacent(r1, r2, rows_));
      }
    }
    return false;
  }

  std::pair<std::uint32_t, std::uint32_t> coords(PhysicalNode node) const {
    return {node / cols_, node % cols_};
  }

  std::string describe() const {
    switch (kind_) {
      case TopologyKind::kRing: return "ring(" + std::to_string(endpoints_) + ")";
      case TopologyKind::kFullyConnected: return "fully_connected(" + std::to_string(endpoints_) + ")";
      case TopologyKind::kMesh2D: return "mesh2d(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
      case TopologyKind::kTorus2D: return "torus2d(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
      case TopologyKind::kSwitch: return "switch(" + std::to_string(endpoints_) + ")";
    }
    return "?";
  }

 private:
  Topology(TopologyKind kind, Rank endpoints, std::uint32_t rows, std::uint32_t cols)
      : kind_(kind), endpoints_(endpoints), rows_(rows), cols_(cols), placement_(endpoints) {
    if (endpoints == 0) throw SchemaError("topology needs at least one endpoint");
    std::iota(placement_.begin(), placement_.end(), PhysicalNode{0});
  }

  TopologyKind kind_;
  Rank endpoints_;
  std::uint32_t rows_;
  std::uint32_t cols_;
  std::vector<PhysicalNode> placement_;
};

namespace detail {

// Steps from `from` to `to` along one dimension of size `extent`, returning
// +1/-1 per hop. Without wrap the direction is fixed by sign; with wrap the
// shorter way is taken and ties go to the increasing direction.
inline std::vector<int> dimension_steps(std::uint32_t from, std::uint32_t to, std::uint32_t extent,
                                        bool wrap) {
  std::vector<int> steps;
  if (from == to) return steps;
  if (!wrap) {
    const int dir = to > from ? 1 : -1;
    steps.assign(to > from ? to - from : from - to, dir);
    return steps;
  }
  const std::uint32_t forward = (to + extent - from) % extent;
  const std::uint32_t backward = extent - forward;
  if (forward <= backward) steps.assign(forward, 1);
  else steps.assign(backward, -1);
  return steps;
}

}  // namespace detail

/// Deterministic path between two physical nodes.
///   ring: shorter arc, ties clockwise (increasing index)
///   fully connected: the direct link
///   mesh/torus: dimension order, X (column) then Y (row)
///   switch: up to the switch, then down
inline std::vector<Link> route(const Topology& topo, PhysicalNode src, PhysicalNode dst) {
  const auto n = static_cast<PhysicalNode>(topo.node_count());
  if (src >= n || dst >= n) throw UnreachableError("route endpoint outside topology");
  if (src == dst) throw UnreachableError("route source equals destination");
  std::vector<Link> path;
  switch (topo.kind()) {
    case TopologyKind::kRing: {
      const PhysicalNode e = topo.endpoints();
      for (int step : detail::dimension_steps(src, dst, e, true)) {
        const PhysicalNode cur = path.empty() ? src : path.back().dst;
        path.push_back({cur, static_cast<PhysicalNode>((cur + e + step) % e)});
      }
      break;
    }
    case TopologyKind::kFullyConnected:
      path.push_back({src, dst});
      break;
    case TopologyKind::kSwitch:
      if (src == topo.switch_node() || dst == topo.switch_node()) {
        path.push_back({src, dst});
      } else {
        path.push_back({src, topo.switch_node()});
        path.push_back({topo.switch_node(), dst});
      }
      break;
    case TopologyKind::kMesh2D:
    case TopologyKind::kTorus2D: {
      const bool wrap = topo.kind() == TopologyKind::kTorus2D;
      auto [row, col] = topo.coords(src);
      const auto [trow, tcol] = topo.coords(dst);
      auto node = [&](std::uint32_t r, std::uint32_t c) { return r * topo.cols() + c; };
      for (int step : detail::dimension_steps(col, tcol, topo.cols(), wrap)) {
        const std::uint32_t next = (col + topo.cols() + step) % topo.cols();
        path.push_back({node(row, col), node(row, next)});
        col = next;
      }
      for (int step : detail::dimension_steps(row, trow, topo.rows(), wrap)) {
        const std::uint32_t next = (row + topo.rows() + step) % topo.rows();
        path.push_back({node(row, col), node(next, col)});
        row = next;
      }
      break;
    }
  }
  for (const auto& l : path)
    if (!topo.has_link(l))
      throw UnreachableError("no link " + std::to_string(l.src) + "->" + std::to_string(l.dst) + " in " +
                             topo.describe());
  return path;
}

/// Parses "ring", "fc"/"fully_connected", "switch", "mesh2d:RxC", "torus2d:RxC"
/// for `n` endpoints. 2D kinds must satisfy R*C == n.
inline Topology parse_topology(std::string_view spec, Rank n) {
  auto dims = [&](std::string_view prefix) -> std::pair<std::uint32_t, std::uint32_t> {
    auto rest = spec.substr(prefix.size());
    auto x = rest.find('x');
    if (rest.empty() || x == std::string_view::npos)
      throw SchemaError("expected " + std::string(prefix) + "RxC, got \"" + std::string(spec) + "\"");
    std::uint32_t r = 0, c = 0;
    try {
      std::size_t used = 0;
      r = static_cast<std::uint32_t>(std::stoul(std::string(rest.substr(0, x)), &used));
      if (used != x) throw std::invalid_argument("rows");
      c = static_cast<std::uint32_t>(std::stoul(std::string(rest.substr(x + 1)), &used));
      if (used != rest.size() - x - 1) throw std::invalid_argument("cols");
    } catch (const std::logic_error&) {
      throw SchemaError("bad dimensions in \"" + std::string(spec) + "\"");
    }
    if (r == 0 || c == 0 || std::uint64_t{r} * c != n)
      throw SchemaError("\"" + std::string(spec) + "\" does not have " + std::to_string(n) + " nodes");
    return {r, c};
  };
  if (spec == "ring") return Topology::ring(n);
  if (spec == "fc" || spec == "fully_connected") return Topology::fully_connected(n);
  if (spec == "switch") return Topology::switched(n);
  if (spec.rfind("mesh2d:", 0) == 0) {
    auto [r, c] = dims("mesh2d:");
    return Topology::mesh2d(r, c);
  }
  if (spec.rfind("torus2d:", 0) == 0) {
    auto [r, c] = dims("torus2d:");
    return Topology::torus2d(r, c);
  }
  throw SchemaError("unknown topology \"" + std::string(spec) + "\"");
}

}  // namespace collgraph
