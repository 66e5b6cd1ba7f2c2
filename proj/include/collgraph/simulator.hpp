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

#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "collgraph/topology.hpp"
#include "collgraph/trace.hpp"

namespace collgraph {

/// Analytical cost parameters, uniform across all links.
struct CostModel {
  double alpha_s = 0.0;
  double bandwidth_Bps = 1.0;
  /// REDUCE/COPY throughput; nullopt means free.
  std::optional<double> reduce_bandwidth_Bps;
  /// Throughput for COMP nodes with any other non-NOP op; nullopt means free.
  std::optional<double> compute_bandwidth_Bps;
  /// Added to every COMP except NOP.
  double fixed_comp_overhead_s = 0.0;

  void check() const {
    auto bad = [](double v) { return !std::isfinite(v) || v < 0; };
    if (bad(alpha_s)) throw SchemaError("alpha_s must be finite and non-negative");
    if (!std::isfinite(bandwidth_Bps) || bandwidth_Bps <= 0)
      throw SchemaError("bandwidth_Bps must be finite and positive");
    if (reduce_bandwidth_Bps && !(*reduce_bandwidth_Bps > 0))
      throw SchemaError("reduce_bandwidth_Bps must be positive");
    if (compute_bandwidth_Bps && !(*compute_bandwidth_Bps > 0))
      throw SchemaError("compute_bandwidth_Bps must be positive");
    if (bad(fixed_comp_overhead_s)) throw SchemaError("fixed_comp_overhead_s must be non-negative");
  }

  double link_time(Bytes size) const { return alpha_s + static_cast<double>(size) / bandwidth_Bps; }

  double comp_time(const CompAttrs& c) const {
    if (c.op == comp_op::kNop) return 0.0;
    const bool reduce_like = c.op == comp_op::kReduce || c.op == comp_op::kCopy;
    const auto& rate = reduce_like ? reduce_bandwidth_Bps : compute_bandwidth_Bps;
    double t = fixed_comp_overhead_s;
    if (rate) t += static_cast<double>(c.comp_size) / *rate;
    return t;
  }
};

struct NodeTiming {
  NodeId id = 0;
  double issue = 0.0;
  double start = 0.0;
  double finish = 0.0;

  friend bool operator==(const NodeTiming&, const NodeTiming&) = default;
};

struct LinkUsage {
  Link link;
  double busy_s = 0.0;
  std::size_t messages = 0;

  friend bool operator==(const LinkUsage&, const LinkUsage&) = default;
};

struct SimReport {
  std::vector<std::vector<NodeTiming>> ranks;  // same order as the trace's nodes
  double total_duration = 0.0;
  std::vector<LinkUsage> links;  // links that carried traffic, ascending
  std::size_t event_count = 0;

  friend bool operator==(const SimReport&, const SimReport&) = default;
};

namespace detail {

class Simulation {
 public:
  Simulation(const Trace& trace, const Topology& topo, const CostModel& cost)
      : trace_(trace), topo_(topo), cost_(cost) {}

  SimReport run() {
    cost_.check();
    prepare();
    for (Rank r = 0; r < trace_.num_ranks; ++r)
      for (std::size_t i = 0; i < trace_.ranks[r].size(); ++i)
        if (pending_[r][i] == 0) issue(r, i, 0.0);
    grant_links(0.0);

    while (!events_.empty()) {
      const double now = events_.top().time;
      while (!events_.empty() && events_.top().time == now) {
        Event ev = events_.top();
        events_.pop();
        ++report_.event_count;
        if (ev.type == EventType::kNodeFinish) {
          finish_node(ev.rank, ev.index, now);
        } else {
          link_done(ev.index, now);
        }
      }
      grant_links(now);
    }

    std::vector<PendingNode> pending;
    for (Rank r = 0; r < trace_.num_ranks; ++r)
      for (std::size_t i = 0; i < trace_.ranks[r].size(); ++i)
        if (!finished_[r][i] && issued_[r][i]) pending.push_back({r, trace_.ranks[r][i].id});
    if (finished_count_ != total_nodes_) {
      std::sort(pending.begin(), pending.end());
      throw DeadlockError(std::move(pending));
    }

    for (std::size_t l = 0; l < links_.size(); ++l)
      if (link_state_[l].messages > 0)
        report_.links.push_back({links_[l], link_state_[l].busy_time, link_state_[l].messages});
    std::sort(report_.links.begin(), report_.links.end(),
              [](const LinkUsage& a, const LinkUsage& b) { return a.link < b.link; });
    return std::move(report_);
  }

 private:
  enum class EventType { kNodeFinish, kLinkDone };

  struct Event {
    double time;
    std::uint64_t seq;
    EventType type;
    Rank rank;
    std::size_t index;  // node index, or link index for kLinkDone

    bool operator>(const Event& o) const { return std::tie(time, seq) > std::tie(o.time, o.seq); }
  };

  struct Message {
    Rank src;
    Rank dst;
    Tag tag;
    Bytes size;
    std::size_t send_index;
    std::vector<std::size_t> path;  // link indices
    std::size_t hop = 0;
    double enqueued = 0.0;
    std::optional<double> arrival;
  };

  struct LinkState {
    bool occupied = false;
    std::optional<std::size_t> in_flight;
    // FIFO by enqueue time; ties by (src, dst, tag).
    std::set<std::tuple<double, Rank, Rank, Tag, std::size_t>> queue;
    double busy_time = 0.0;
    std::size_t messages = 0;
  };

  void prepare() {
    const Rank n = trace_.num_ranks;
    if (n > topo_.endpoints())
      throw SchemaError("trace has " + std::to_string(n) + " ranks but " + topo_.describe() +
                        " has only " + std::to_string(topo_.endpoints()) + " endpoints");
    auto violations = find_matching_violations(trace_);
    if (!violations.empty()) throw MatchError(violations.front().message);

    report_.ranks.resize(n);
    pending_.resize(n);
    users_.resize(n);
    issued_.resize(n);
    finished_.resize(n);
    for (Rank r = 0; r < n; ++r) {
      const auto& nodes = trace_.ranks[r];
      auto index = index_by_id(nodes);
      report_.ranks[r].resize(nodes.size());
      pending_[r].assign(nodes.size(), 0);
      users_[r].assign(nodes.size(), {});
      issued_[r].assign(nodes.size(), false);
      finished_[r].assign(nodes.size(), false);
      total_nodes_ += nodes.size();
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& node = nodes[i];
        report_.ranks[r][i].id = node.id;
        if (node.kind() == NodeKind::kCommColl)
          throw UnexpandedCollectiveError("rank " + std::to_string(r) + " node " +
                                          std::to_string(node.id) +
                                          " is a COMM_COLL placeholder; expand the workload first");
        for (NodeId d : node.deps) {
          auto it = index.find(d);
          if (it == index.end())
            throw InvariantError("dependency on unknown node " + std::to_string(d), r, node.id);
          users_[r][it->second].push_back(i);
          ++pending_[r][i];
        }
        if (const auto* v = node.recv()) recv_index_[{v->src_rank, r, v->tag}] = i;
      }
    }
  }

  std::size_t link_index(Link l) {
    auto [it, inserted] = link_ids_.emplace(l, links_.size());
    if (inserted) {
      links_.push_back(l);
      link_state_.emplace_back();
    }
    return it->second;
  }

  const std::vector<std::size_t>& path_for(Rank src, Rank dst) {
    auto key = std::make_pair(src, dst);
    auto it = paths_.find(key);
    if (it != paths_.end()) return it->second;
    std::vector<std::size_t> ids;
    for (const auto& l : route(topo_, topo_.node_of(src), topo_.node_of(dst))) ids.push_back(link_index(l));
    return paths_.emplace(key, std::move(ids)).first->second;
  }

  void push(double time, EventType type, Rank rank, std::size_t index) {
    events_.push(Event{time, seq_++, type, rank, index});
  }

  void issue(Rank r, std::size_t i, double now) {
    issued_[r][i] = true;
    auto& timing = report_.ranks[r][i];
    timing.issue = now;
    const auto& node = trace_.ranks[r][i];
    switch (node.kind()) {
      case NodeKind::kComp:
        timing.start = now;
        push(now + cost_.comp_time(*node.comp()), EventType::kNodeFinish, r, i);
        break;
      case NodeKind::kCommSend: {
        const auto* s = node.send();
        Message msg{r, s->dst_rank, s->tag, s->comm_size, i, path_for(r, s->dst_rank), 0, now, std::nullopt};
        const std::size_t id = messages_.size();
        messages_.push_back(std::move(msg));
        enqueue(id, now);
        break;
      }
      case NodeKind::kCommRecv: {
        timing.start = now;
        const auto* v = node.recv();
        auto it = arrivals_.find({v->src_rank, r, v->tag});
        if (it != arrivals_.end()) push(now, EventType::kNodeFinish, r, i);
        break;
      }
      case NodeKind::kCommColl:
        break;  // rejected in prepare()
    }
  }

  void enqueue(std::size_t msg_id, double now) {
    Message& m = messages_[msg_id];
    m.enqueued = now;
    auto& link = link_state_[m.path[m.hop]];
    link.queue.emplace(now, m.src, m.dst, m.tag, msg_id);
  }

  void grant_links(double now) {
    for (std::size_t l = 0; l < link_state_.size(); ++l) {
      auto& link = link_state_[l];
      if (link.occupied || link.queue.empty()) continue;
      const std::size_t msg_id = std::get<4>(*link.queue.begin());
      link.queue.erase(link.queue.begin());
      Message& m = messages_[msg_id];
      const double transit = cost_.link_time(m.size);
      link.occupied = true;
      link.in_flight = msg_id;
      link.messages += 1;
      link.busy_time += transit;
      if (m.hop == 0) report_.ranks[m.src][m.send_index].start = now;
      push(now + transit, EventType::kLinkDone, 0, l);
    }
  }

  void link_done(std::size_t l, double now) {
    auto& link = link_state_[l];
    const std::size_t msg_id = *link.in_flight;
    link.occupied = false;
    link.in_flight.reset();
    Message& m = messages_[msg_id];
    ++m.hop;
    if (m.hop == 1) finish_node(m.src, m.send_index, now);
    if (m.hop < m.path.size()) {
      enqueue(msg_id, now);
      return;
    }
    m.arrival = now;
    arrivals_[{m.src, m.dst, m.tag}] = now;
    const std::size_t ri = recv_index_.at({m.src, m.dst, m.tag});
    if (issued_[m.dst][ri] && !finished_[m.dst][ri]) finish_node(m.dst, ri, now);
  }

  void finish_node(Rank r, std::size_t i, double now) {
    if (finished_[r][i]) return;
    finished_[r][i] = true;
    ++finished_count_;
    report_.ranks[r][i].finish = now;
    report_.total_duration = std::max(report_.total_duration, now);
    for (std::size_t u : users_[r][i])
      if (--pending_[r][u] == 0) issue(r, u, now);
  }

  const Trace& trace_;
  const Topology& topo_;
  const CostModel& cost_;
  SimReport report_;

  std::vector<std::vector<std::size_t>> pending_;
  std::vector<std::vector<std::vector<std::size_t>>> users_;
  std::vector<std::vector<bool>> issued_;
  std::vector<std::vector<bool>> finished_;
  std::size_t total_nodes_ = 0;
  std::size_t finished_count_ = 0;

  std::map<std::tuple<Rank, Rank, Tag>, std::size_t> recv_index_;
  std::map<std::tuple<Rank, Rank, Tag>, double> arrivals_;
  std::map<std::pair<Rank, Rank>, std::vector<std::size_t>> paths_;
  std::map<Link, std::size_t> link_ids_;
  std::vector<Link> links_;
  std::vector<LinkState> link_state_;
  std::deque<Message> messages_;  // stable references across push_back

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
};

}  // namespace detail

/// Replays a trace on the network. Nodes issue once their dependencies have
/// finished. Messages cross their route store-and-forward, holding each
/// directed link for alpha + size/B; a send finishes when its message leaves
/// the first link, a receive when it has been issued and the message arrived.
inline SimReport simulate(const Trace& trace, const Topology& topo, const CostModel& cost) {
  return detail::Simulation(trace, topo, cost).run();
}

}  // namespace collgraph
