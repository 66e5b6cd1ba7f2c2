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
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "collgraph/generators.hpp"
#include "collgraph/trace.hpp"

namespace collgraph {

/// How a COMM_COLL kind is realised: regenerated per call site at the site's
/// size, or a fixed trace whose claimed size must match exactly.
using Binding = std::variant<AlgoSpec, Trace>;

using BindingMap = std::map<CollectiveKind, Binding>;

/// Tags of the i-th collective instance live in [i * 2^20, (i + 1) * 2^20).
inline constexpr Tag kInstanceTagStride = Tag{1} << 20;

namespace detail {

inline Trace resolve_binding(const Binding& binding, const CollAttrs& site, Rank num_ranks) {
  const std::string what = std::string(to_string(site.coll_kind));
  if (const auto* spec = std::get_if<AlgoSpec>(&binding)) {
    if (collective_of(spec->algorithm) != site.coll_kind)
      throw BindingError(what + " is bound to " + std::string(to_string(spec->algorithm)));
    AlgoSpec sized = *spec;
    sized.num_ranks = num_ranks;
    sized.comm_size = site.comm_size;
    try {
      return generate(sized);
    } catch (const SpecError& e) {
      throw BindingError(what + " binding cannot be generated: " + e.what());
    }
  }
  const Trace& fixed = std::get<Trace>(binding);
  if (fixed.trace_class != TraceClass::kCollective)
    throw BindingError(what + " binding is not a collective trace");
  if (fixed.num_ranks != num_ranks)
    throw BindingError(what + " binding has " + std::to_string(fixed.num_ranks) +
                       " ranks, workload has " + std::to_string(num_ranks));
  if (!fixed.claimed_collective || fixed.claimed_collective->kind != site.coll_kind)
    throw BindingError(what + " binding claims a different collective");
  if (fixed.claimed_collective->comm_size != site.comm_size)
    throw BindingError(what + " binding is for " + std::to_string(fixed.claimed_collective->comm_size) +
                       " bytes, call site needs " + std::to_string(site.comm_size));
  return fixed;
}

inline Tag shift_tag(Tag tag, std::size_t ordinal) {
  if (tag >= kInstanceTagStride)
    throw OverflowError("collective tag " + std::to_string(tag) + " does not fit below 2^20");
  if (ordinal >= (std::numeric_limits<Tag>::max() >> 20))
    throw OverflowError("too many collective instances");
  return Tag{ordinal} * kInstanceTagStride + tag;
}

}  // namespace detail

/// Replaces every COMM_COLL node with the bound algorithm's subgraph for that
/// rank. Edges into the placeholder feed every root of the subgraph; edges
/// out of it leave from every sink. A rank with an empty subgraph keeps a
/// zero-cost NOP anchor under the placeholder's id. Workload nodes keep their
/// ids; each instance's nodes get a fresh id block.
///
/// A workload without placeholders is returned unchanged. Otherwise the
/// result is a collective-class trace with no claimed collective.
inline Trace expand(const Trace& workload, const BindingMap& bindings) {
  if (workload.trace_class != TraceClass::kWorkload)
    throw BindingError("expand needs a workload trace");
  check_structure(workload);
  const Rank n = workload.num_ranks;

  // Placeholder instances in topological order; identical on every rank.
  std::vector<std::vector<std::size_t>> sites(n);
  for (Rank r = 0; r < n; ++r) {
    const auto& nodes = workload.ranks[r];
    auto index = index_by_id(nodes);
    for (NodeId id : toposort_rank(workload, r))
      if (nodes[index[id]].coll()) sites[r].push_back(index[id]);
  }
  if (sites[0].empty()) return workload;

  std::vector<Trace> instances;
  for (std::size_t k = 0; k < sites[0].size(); ++k) {
    const CollAttrs& site = *workload.ranks[0][sites[0][k]].coll();
    auto it = bindings.find(site.coll_kind);
    if (it == bindings.end())
      throw BindingError("no binding for " + std::string(to_string(site.coll_kind)));
    Trace inst = detail::resolve_binding(it->second, site, n);
    check_invariants(inst);
    instances.push_back(std::move(inst));
  }

  Trace out;
  out.trace_class = TraceClass::kCollective;
  out.num_ranks = n;
  out.ranks.resize(n);

  for (Rank r = 0; r < n; ++r) {
    const auto& nodes = workload.ranks[r];
    NodeId next_id = 0;
    for (const auto& node : nodes) next_id = std::max(next_id, node.id + 1);

    // Placeholder id -> ids that now stand in for it as a dependency.
    std::map<NodeId, std::vector<NodeId>> replaced_by;
    std::vector<TraceNode> spliced;
    for (std::size_t k = 0; k < sites[r].size(); ++k) {
      const TraceNode& placeholder = nodes[sites[r][k]];
      const auto& sub = instances[k].ranks[r];
      if (sub.empty()) {
        spliced.push_back(TraceNode{placeholder.id, placeholder.name, placeholder.deps,
                                    CompAttrs{0, std::string(comp_op::kNop), std::nullopt}});
        replaced_by[placeholder.id] = {placeholder.id};
        continue;
      }
      const NodeId base = next_id;
      NodeId max_local = 0;
      std::vector<bool> has_user(sub.size(), false);
      auto sub_index = index_by_id(sub);
      for (const auto& sn : sub) {
        max_local = std::max(max_local, sn.id);
        for (NodeId d : sn.deps) has_user[sub_index.at(d)] = true;
      }
      next_id = base + max_local + 1;
      auto& sinks = replaced_by[placeholder.id];
      for (std::size_t i = 0; i < sub.size(); ++i) {
        TraceNode copy = sub[i];
        copy.id = base + sub[i].id;
        copy.name = placeholder.name + "/" + sub[i].name;
        for (auto& d : copy.deps) d += base;
        if (copy.deps.empty()) copy.deps = placeholder.deps;
        if (auto* s = std::get_if<SendAttrs>(&copy.attrs)) s->tag = detail::shift_tag(s->tag, k);
        if (auto* v = std::get_if<RecvAttrs>(&copy.attrs)) v->tag = detail::shift_tag(v->tag, k);
        if (!has_user[i]) sinks.push_back(copy.id);
        spliced.push_back(std::move(copy));
      }
    }

    auto rewire = [&](std::vector<NodeId>& deps) {
      std::vector<NodeId> out_deps;
      for (NodeId d : deps) {
        auto it = replaced_by.find(d);
        if (it == replaced_by.end()) out_deps.push_back(d);
        else out_deps.insert(out_deps.end(), it->second.begin(), it->second.end());
      }
      std::sort(out_deps.begin(), out_deps.end());
      out_deps.erase(std::unique(out_deps.begin(), out_deps.end()), out_deps.end());
      deps = std::move(out_deps);
    };

    // Subgraph roots inherited the placeholder's own deps, which may name
    // earlier placeholders; rewire those too.
    for (auto& node : spliced) rewire(node.deps);
    for (const auto& node : nodes) {
      if (node.coll()) continue;
      TraceNode copy = node;
      rewire(copy.deps);
      out.ranks[r].push_back(std::move(copy));
    }
    for (auto& node : spliced) out.ranks[r].push_back(std::move(node));
  }
  normalize(out);
  check_invariants(out);
  return out;
}

}  // namespace collgraph
