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

#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "collgraph/trace.hpp"
#include "collgraph/trace_io.hpp"
#include "collgraph/xml.hpp"

namespace collgraph::msccl {

// Supported dialect:
//
//   <algo name="..." ngpus="N" nchunks="C" coll="allreduce">
//     <gpu id="g">
//       <tb id="t" send="peer|-1" recv="peer|-1" chan="c">
//         <step s="i" type="s|r|rrc|rcs|re|cpy|nop" srcbuf="i|o|s" srcoff="k"
//               dstbuf="i|o|s" dstoff="k" cnt="n" depid="t|-1" deps="i|-1" hasdep="0|1"/>
//
// Anything else is rejected.

enum class StepType { kSend, kRecv, kRecvReduceCopy, kRecvCopySend, kReduce, kCopy, kNop };

enum class Buffer { kInput, kOutput, kScratch };

inline std::string_view to_string(StepType t) {
  switch (t) {
    case StepType::kSend: return "s";
    case StepType::kRecv: return "r";
    case StepType::kRecvReduceCopy: return "rrc";
    case StepType::kRecvCopySend: return "rcs";
    case StepType::kReduce: return "re";
    case StepType::kCopy: return "cpy";
    case StepType::kNop: return "nop";
  }
  return "?";
}

inline bool sends(StepType t) { return t == StepType::kSend || t == StepType::kRecvCopySend; }
inline bool receives(StepType t) {
  return t == StepType::kRecv || t == StepType::kRecvReduceCopy || t == StepType::kRecvCopySend;
}
/// Number of trace nodes a step expands to.
inline std::size_t node_count(StepType t) {
  return t == StepType::kRecvReduceCopy || t == StepType::kRecvCopySend ? 2 : 1;
}

struct StepRef {
  std::uint32_t tb = 0;
  std::uint32_t step = 0;
};

struct Step {
  std::uint32_t index = 0;
  StepType type = StepType::kNop;
  Buffer src_buf = Buffer::kInput;
  std::uint32_t src_off = 0;
  Buffer dst_buf = Buffer::kInput;
  std::uint32_t dst_off = 0;
  std::uint32_t cnt = 1;
  std::optional<StepRef> depend;
  bool has_dep = false;
  std::size_t line = 0;
};

struct Threadblock {
  std::uint32_t id = 0;
  std::optional<Rank> send_peer;
  std::optional<Rank> recv_peer;
  std::uint32_t channel = 0;
  std::vector<Step> steps;
};

struct Gpu {
  Rank id = 0;
  std::vector<Threadblock> threadblocks;  // ascending by id

  const Threadblock* find_tb(std::uint32_t tb) const {
    for (const auto& t : threadblocks)
      if (t.id == tb) return &t;
    return nullptr;
  }
};

struct Program {
  std::string name;
  Rank num_gpus = 0;
  std::uint32_t num_chunks = 0;
  CollectiveKind collective = CollectiveKind::kAllReduce;
  std::vector<Gpu> gpus;  // indexed by gpu id

  std::size_t step_count() const {
    std::size_t n = 0;
    for (const auto& g : gpus)
      for (const auto& tb : g.threadblocks) n += tb.steps.size();
    return n;
  }
};

namespace detail {

inline std::string at_line(const xml::Element& el) {
  return "<" + el.name + "> at line " + std::to_string(el.line);
}

class Attrs {
 public:
  Attrs(const xml::Element& el, std::initializer_list<std::string_view> required,
        std::initializer_list<std::string_view> optional)
      : el_(el) {
    for (const auto& [key, _] : el.attrs) {
      bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                   std::find(optional.begin(), optional.end(), key) != optional.end();
      if (!known) throw SchemaError("unknown attribute \"" + key + "\" on " + at_line(el));
    }
    for (auto key : required)
      if (!el.attr(key))
        throw SchemaError("missing attribute \"" + std::string(key) + "\" on " + at_line(el));
  }

  bool has(std::string_view key) const { return el_.attr(key) != nullptr; }

  const std::string& str(std::string_view key) const { return *el_.attr(key); }

  std::int64_t integer(std::string_view key) const {
    const std::string& v = str(key);
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
      throw SchemaError("attribute \"" + std::string(key) + "\"=\"" + v + "\" is not an integer on " +
                        at_line(el_));
    return out;
  }

  std::uint32_t non_negative(std::string_view key) const {
    auto v = integer(key);
    if (v < 0 || v > std::numeric_limits<std::uint32_t>::max())
      throw SchemaError("attribute \"" + std::string(key) + "\" out of range on " + at_line(el_));
    return static_cast<std::uint32_t>(v);
  }

  /// -1 (or absence) means "none".
  std::optional<std::uint32_t> optional_index(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    auto v = integer(key);
    if (v == -1) return std::nullopt;
    if (v < 0 || v > std::numeric_limits<std::uint32_t>::max())
      throw SchemaError("attribute \"" + std::string(key) + "\" out of range on " + at_line(el_));
    return static_cast<std::uint32_t>(v);
  }

 private:
  const xml::Element& el_;
};

inline CollectiveKind parse_coll(const std::string& s, const xml::Element& el) {
  if (s == "allreduce" || s == "ALL_REDUCE") return CollectiveKind::kAllReduce;
  if (s == "allgather" || s == "ALL_GATHER") return CollectiveKind::kAllGather;
  if (s == "reduce_scatter" || s == "reducescatter" || s == "REDUCE_SCATTER")
    return CollectiveKind::kReduceScatter;
  if (s == "broadcast" || s == "BROADCAST") return CollectiveKind::kBroadcast;
  throw SchemaError("unknown collective \"" + s + "\" on " + at_line(el));
}

inline StepType parse_step_type(const std::string& s, const xml::Element& el) {
  if (s == "s") return StepType::kSend;
  if (s == "r") return StepType::kRecv;
  if (s == "rrc") return StepType::kRecvReduceCopy;
  if (s == "rcs") return StepType::kRecvCopySend;
  if (s == "re") return StepType::kReduce;
  if (s == "cpy") return StepType::kCopy;
  if (s == "nop") return StepType::kNop;
  throw SchemaError("unknown step type \"" + s + "\" at line " + std::to_string(el.line));
}

inline Buffer parse_buffer(const std::string& s, const xml::Element& el) {
  if (s == "i" || s == "input") return Buffer::kInput;
  if (s == "o" || s == "output") return Buffer::kOutput;
  if (s == "s" || s == "scratch") return Buffer::kScratch;
  throw SchemaError("unknown buffer \"" + s + "\" on " + at_line(el));
}

inline void expect_name(const xml::Element& el, std::string_view name) {
  if (el.name != name)
    throw SchemaError("unexpected element <" + el.name + "> at line " + std::to_string(el.line) +
                      ", expected <" + std::string(name) + ">");
}

}  // namespace detail

/// Parses and checks an algorithm document held in memory.
inline Program parse_xml(std::string_view text) {
  const xml::Element root = xml::parse(text);
  detail::expect_name(root, "algo");
  detail::Attrs a(root, {"ngpus", "nchunks", "coll"}, {"name"});
  Program prog;
  prog.name = a.has("name") ? a.str("name") : "";
  prog.num_gpus = a.non_negative("ngpus");
  prog.num_chunks = a.non_negative("nchunks");
  prog.collective = detail::parse_coll(a.str("coll"), root);
  if (prog.num_gpus == 0) throw SchemaError("ngpus must be positive");
  if (prog.num_chunks == 0) throw SchemaError("nchunks must be positive");
  prog.gpus.resize(prog.num_gpus);
  std::vector<bool> seen(prog.num_gpus, false);

  auto check_peer = [&](std::optional<std::uint32_t> peer, Rank self, const xml::Element& el) {
    if (!peer) return;
    if (*peer >= prog.num_gpus)
      throw SchemaError("peer " + std::to_string(*peer) + " out of range on " + detail::at_line(el));
    if (*peer == self) throw SchemaError("peer is the gpu itself on " + detail::at_line(el));
  };

  for (const auto& gel : root.children) {
    detail::expect_name(gel, "gpu");
    detail::Attrs ga(gel, {"id"}, {});
    const Rank gid = ga.non_negative("id");
    if (gid >= prog.num_gpus)
      throw SchemaError("gpu id " + std::to_string(gid) + " out of range at line " +
                        std::to_string(gel.line));
    if (seen[gid]) throw SchemaError("duplicate gpu id " + std::to_string(gid));
    seen[gid] = true;
    Gpu& gpu = prog.gpus[gid];
    gpu.id = gid;

    for (const auto& tel : gel.children) {
      detail::expect_name(tel, "tb");
      detail::Attrs ta(tel, {"id"}, {"send", "recv", "chan"});
      Threadblock tb;
      tb.id = ta.non_negative("id");
      tb.send_peer = ta.optional_index("send");
      tb.recv_peer = ta.optional_index("recv");
      tb.channel = ta.has("chan") ? ta.non_negative("chan") : 0;
      check_peer(tb.send_peer, gid, tel);
      check_peer(tb.recv_peer, gid, tel);
      if (gpu.find_tb(tb.id))
        throw SchemaError("duplicate tb id " + std::to_string(tb.id) + " on gpu " +
                          std::to_string(gid));

      for (const auto& sel : tel.children) {
        detail::expect_name(sel, "step");
        detail::Attrs sa(sel, {"s", "type"},
                         {"srcbuf", "srcoff", "dstbuf", "dstoff", "cnt", "depid", "deps", "hasdep"});
        Step step;
        step.line = sel.line;
        step.index = sa.non_negative("s");
        step.type = detail::parse_step_type(sa.str("type"), sel);
        if (sa.has("srcbuf")) step.src_buf = detail::parse_buffer(sa.str("srcbuf"), sel);
        if (sa.has("dstbuf")) step.dst_buf = detail::parse_buffer(sa.str("dstbuf"), sel);
        step.src_off = sa.has("srcoff") ? sa.non_negative("srcoff") : 0;
        step.dst_off = sa.has("dstoff") ? sa.non_negative("dstoff") : 0;
        step.cnt = sa.has("cnt") ? sa.non_negative("cnt") : 1;
        step.has_dep = sa.has("hasdep") && sa.integer("hasdep") != 0;
        auto dep_tb = sa.optional_index("depid");
        auto dep_step = sa.optional_index("deps");
        if (dep_tb.has_value() != dep_step.has_value())
          throw SchemaError("depid and deps must be given together on " + detail::at_line(sel));
        if (dep_tb) step.depend = StepRef{*dep_tb, *dep_step};

        if (step.index != tb.steps.size())
          throw SchemaError("step index " + std::to_string(step.index) + " at line " +
                            std::to_string(sel.line) + " is not dense (expected " +
                            std::to_string(tb.steps.size()) + ")");
        if (sends(step.type) && !tb.send_peer)
          throw SchemaError("step type \"" + std::string(to_string(step.type)) + "\" at line " +
                            std::to_string(sel.line) + " needs a tb with a send peer");
        if (receives(step.type) && !tb.recv_peer)
          throw SchemaError("step type \"" + std::string(to_string(step.type)) + "\" at line " +
                            std::to_string(sel.line) + " needs a tb with a recv peer");
        if (step.type != StepType::kNop) {
          if (step.cnt == 0) throw SchemaError("cnt must be positive at line " + std::to_string(sel.line));
          if (std::uint64_t{step.src_off} + step.cnt > prog.num_chunks ||
              std::uint64_t{step.dst_off} + step.cnt > prog.num_chunks)
            throw SchemaError("chunk range exceeds nchunks at line " + std::to_string(sel.line));
        }
        tb.steps.push_back(step);
      }
      gpu.threadblocks.push_back(std::move(tb));
    }
    std::sort(gpu.threadblocks.begin(), gpu.threadblocks.end(),
              [](const Threadblock& x, const Threadblock& y) { return x.id < y.id; });
  }
  for (Rank g = 0; g < prog.num_gpus; ++g)
    if (!seen[g]) throw SchemaError("missing <gpu id=\"" + std::to_string(g) + "\">");

  for (const auto& gpu : prog.gpus)
    for (const auto& tb : gpu.threadblocks)
      for (const auto& step : tb.steps) {
        if (!step.depend) continue;
        const Threadblock* target = gpu.find_tb(step.depend->tb);
        if (!target || step.depend->step >= target->steps.size())
          throw RefError("step at line " + std::to_string(step.line) + " depends on tb " +
                         std::to_string(step.depend->tb) + " step " +
                         std::to_string(step.depend->step) + ", which does not exist on gpu " +
                         std::to_string(gpu.id));
      }
  return prog;
}

inline Program parse_xml_file(const std::filesystem::path& path) {
  return parse_xml(read_file(path));
}

/// Expands every step into trace nodes. Steps run in order inside their
/// threadblock; `depid/deps` add an edge from the referenced step's last node.
/// Tags number each (src, dst) stream channel by channel, in step order.
inline Trace convert_to_trace(const Program& prog, Bytes comm_size) {
  if (comm_size == 0 || comm_size % prog.num_chunks != 0)
    throw SizeError("comm_size " + std::to_string(comm_size) + " is not a positive multiple of nchunks " +
                    std::to_string(prog.num_chunks));
  const Bytes chunk = comm_size / prog.num_chunks;

  struct Emitted {
    NodeId first;
    NodeId last;
    std::optional<NodeId> send;  // node carrying the outgoing message, if any
    std::optional<NodeId> recv;
  };
  // Per gpu, per (tb id, step index).
  std::vector<std::map<std::pair<std::uint32_t, std::uint32_t>, Emitted>> emitted(prog.num_gpus);

  // Message streams keyed (src, dst, channel); entries are (gpu, tb, step).
  using Stream = std::vector<std::tuple<Rank, std::uint32_t, std::uint32_t>>;
  std::map<std::tuple<Rank, Rank, std::uint32_t>, Stream> send_streams, recv_streams;

  for (const auto& gpu : prog.gpus) {
    NodeId next = 0;
    for (const auto& tb : gpu.threadblocks)
      for (const auto& step : tb.steps) {
        Emitted e{};
        e.first = next;
        const std::size_t count = node_count(step.type);
        e.last = next + count - 1;
        if (receives(step.type)) e.recv = e.first;
        if (sends(step.type)) e.send = e.last;
        next += count;
        emitted[gpu.id][{tb.id, step.index}] = e;
        if (sends(step.type))
          send_streams[{gpu.id, *tb.send_peer, tb.channel}].emplace_back(gpu.id, tb.id, step.index);
        if (receives(step.type))
          recv_streams[{*tb.recv_peer, gpu.id, tb.channel}].emplace_back(gpu.id, tb.id, step.index);
      }
  }

  // Streams are in (tb, step) order already because gpus/tbs/steps were
  // walked in ascending order. Check balance, then assign tags.
  using StepKey = std::tuple<Rank, std::uint32_t, std::uint32_t>;  // (gpu, tb, step)
  std::map<StepKey, Tag> send_tag, recv_tag;
  std::map<std::pair<Rank, Rank>, Tag> next_tag;
  auto step_at = [&](Rank g, std::uint32_t tb, std::uint32_t s) -> const Step& {
    return prog.gpus[g].find_tb(tb)->steps[s];
  };
  std::set<std::tuple<Rank, Rank, std::uint32_t>> keys;
  for (const auto& [k, _] : send_streams) keys.insert(k);
  for (const auto& [k, _] : recv_streams) keys.insert(k);
  for (const auto& key : keys) {
    const auto& [src, dst, chan] = key;
    const Stream empty;
    const Stream& out = send_streams.count(key) ? send_streams.at(key) : empty;
    const Stream& in = recv_streams.count(key) ? recv_streams.at(key) : empty;
    if (out.size() != in.size())
      throw MatchError("gpu " + std::to_string(src) + " sends " + std::to_string(out.size()) +
                       " message(s) to gpu " + std::to_string(dst) + " on channel " +
                       std::to_string(chan) + " but gpu " + std::to_string(dst) + " receives " +
                       std::to_string(in.size()));
    Tag& base = next_tag[{src, dst}];
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& [sg, stb, ss] = out[i];
      const auto& [rg, rtb, rs] = in[i];
      const Step& sstep = step_at(sg, stb, ss);
      const Step& rstep = step_at(rg, rtb, rs);
      if (sstep.cnt != rstep.cnt)
        throw MatchError("message " + std::to_string(i) + " from gpu " + std::to_string(src) +
                         " to gpu " + std::to_string(dst) + " sends " + std::to_string(sstep.cnt) +
                         " chunk(s) (line " + std::to_string(sstep.line) + ") but receives " +
                         std::to_string(rstep.cnt) + " (line " + std::to_string(rstep.line) + ")");
      send_tag[out[i]] = base + i;
      recv_tag[in[i]] = base + i;
    }
    base += out.size();
  }

  TraceBuilder b(TraceClass::kCollective, prog.num_gpus,
                 ClaimedCollective{prog.collective, comm_size});
  for (const auto& gpu : prog.gpus) {
    for (const auto& tb : gpu.threadblocks) {
      std::optional<NodeId> prev_last;
      for (const auto& step : tb.steps) {
        const Emitted& e = emitted[gpu.id].at({tb.id, step.index});
        std::vector<NodeId> deps;
        if (prev_last) deps.push_back(*prev_last);
        if (step.depend) {
          NodeId d = emitted[gpu.id].at({step.depend->tb, step.depend->step}).last;
          if (std::find(deps.begin(), deps.end(), d) == deps.end()) deps.push_back(d);
        }
        const Bytes bytes = Bytes{step.cnt} * chunk;
        auto range = [&](std::uint32_t off) {
          ChunkList c;
          for (std::uint32_t i = 0; i < step.cnt; ++i) c.push_back(off + i);
          return c;
        };
        const std::string base = "g" + std::to_string(gpu.id) + "_tb" + std::to_string(tb.id) +
                                 "_s" + std::to_string(step.index) + "_" +
                                 std::string(to_string(step.type));
        const StepKey where{gpu.id, tb.id, step.index};
        switch (step.type) {
          case StepType::kSend:
            b.add(gpu.id, base, SendAttrs{*tb.send_peer, bytes, send_tag.at(where), range(step.src_off)},
                  deps);
            break;
          case StepType::kRecv:
            b.add(gpu.id, base, RecvAttrs{*tb.recv_peer, bytes, recv_tag.at(where), range(step.dst_off)},
                  deps);
            break;
          case StepType::kRecvReduceCopy:
            b.add(gpu.id, base + "_recv",
                  RecvAttrs{*tb.recv_peer, bytes, recv_tag.at(where), range(step.dst_off)}, deps);
            b.add(gpu.id, base + "_reduce",
                  CompAttrs{bytes, std::string(comp_op::kReduce), range(step.dst_off)}, {e.first});
            break;
          case StepType::kRecvCopySend:
            b.add(gpu.id, base + "_recv",
                  RecvAttrs{*tb.recv_peer, bytes, recv_tag.at(where), range(step.dst_off)}, deps);
            b.add(gpu.id, base + "_send",
                  SendAttrs{*tb.send_peer, bytes, send_tag.at(where), range(step.dst_off)}, {e.first});
            break;
          case StepType::kReduce:
            b.add(gpu.id, base, CompAttrs{bytes, std::string(comp_op::kReduce), range(step.dst_off)},
                  deps);
            break;
          case StepType::kCopy:
            b.add(gpu.id, base, CompAttrs{bytes, std::string(comp_op::kCopy), range(step.dst_off)}, deps);
            break;
          case StepType::kNop:
            b.add(gpu.id, base, CompAttrs{0, std::string(comp_op::kNop), std::nullopt}, deps);
            break;
        }
        prev_last = e.last;
      }
    }
  }
  Trace trace = std::move(b).finish();
  try {
    check_invariants(trace);
  } catch (const InvariantError& e) {
    throw MatchError(std::string("converted trace is invalid: ") + e.what());
  }
  return trace;
}

}  // namespace collgraph::msccl
