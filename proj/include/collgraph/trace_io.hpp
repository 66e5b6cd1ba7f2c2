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
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "collgraph/trace.hpp"

namespace collgraph {

// On-disk trace document, one JSON object per file:
//
//   {"format_version": "1",
//    "trace_class": "collective" | "workload",
//    "num_ranks": N,
//    "claimed_collective": {"kind": K, "comm_size": S} | null,
//    "ranks": [[node, ...], ...]}
//
//   node = {"id", "name", "kind", "deps", "attrs"}
//   attrs  COMM_SEND  {"dst_rank", "comm_size", "tag", ["chunks"]}
//          COMM_RECV  {"src_rank", "comm_size", "tag", ["chunks"]}
//          COMP       {"comp_size", "op", ["chunks"]}
//          COMM_COLL  {"coll_kind", "comm_size"}
//
// Canonical output keeps keys in exactly the order above, nodes ascending by
// id, one node per line, LF line endings and a trailing newline.

inline constexpr std::string_view kFormatVersion = "1";

struct LoadOptions {
  /// Send/recv matching and tag uniqueness. Disabled by `validate`, which
  /// reports matching problems as verdict violations instead.
  bool check_matching = true;
};

namespace detail {

using ojson = nlohmann::ordered_json;

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw SchemaError(where_ + ": expected an object");
  }

  void allow_only(std::initializer_list<std::string_view> keys) const {
    for (const auto& [key, _] : obj_.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw SchemaError(where_ + ": unknown key \"" + key + "\"");
    }
  }

  const nlohmann::json& at(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) throw SchemaError(where_ + ": missing \"" + key + "\"");
    return *it;
  }

  bool has(const char* key) const { return obj_.contains(key); }

  std::uint64_t uint(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw SchemaError(where_ + ": \"" + key + "\" must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string str(const char* key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw SchemaError(where_ + ": \"" + key + "\" must be a string");
    return v.get<std::string>();
  }

  std::vector<std::uint64_t> uint_list(const char* key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw SchemaError(where_ + ": \"" + key + "\" must be an array");
    std::vector<std::uint64_t> out;
    out.reserve(v.size());
    for (const auto& e : v) {
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0))
        throw SchemaError(where_ + ": \"" + key + "\" entries must be non-negative integers");
      out.push_back(e.get<std::uint64_t>());
    }
    return out;
  }

  std::optional<ChunkList> chunks() const {
    if (!has("chunks")) return std::nullopt;
    ChunkList out;
    for (auto c : uint_list("chunks")) {
      if (c > std::numeric_limits<ChunkIndex>::max())
        throw SchemaError(where_ + ": chunk index out of range");
      out.push_back(static_cast<ChunkIndex>(c));
    }
    return out;
  }

  const std::string& where() const { return where_; }

 private:
  const nlohmann::json& obj_;
  std::string where_;
};

inline Rank as_rank(std::uint64_t v, const std::string& where) {
  if (v > std::numeric_limits<Rank>::max()) throw SchemaError(where + ": rank out of range");
  return static_cast<Rank>(v);
}

inline TraceNode node_from_json(const nlohmann::json& j, const std::string& where) {
  ObjectReader node(j, where);
  node.allow_only({"id", "name", "kind", "deps", "attrs"});
  TraceNode out;
  out.id = node.uint("id");
  out.name = node.str("name");
  out.deps = node.uint_list("deps");
  const std::string kind_name = node.str("kind");
  auto kind = parse_node_kind(kind_name);
  if (!kind) throw SchemaError(where + ": unknown node kind \"" + kind_name + "\"");
  ObjectReader attrs(node.at("attrs"), where + ".attrs");
  switch (*kind) {
    case NodeKind::kCommSend:
      attrs.allow_only({"dst_rank", "comm_size", "tag", "chunks"});
      out.attrs = SendAttrs{as_rank(attrs.uint("dst_rank"), where), attrs.uint("comm_size"),
                            attrs.uint("tag"), attrs.chunks()};
      break;
    case NodeKind::kCommRecv:
      attrs.allow_only({"src_rank", "comm_size", "tag", "chunks"});
      out.attrs = RecvAttrs{as_rank(attrs.uint("src_rank"), where), attrs.uint("comm_size"),
                            attrs.uint("tag"), attrs.chunks()};
      break;
    case NodeKind::kComp:
      attrs.allow_only({"comp_size", "op", "chunks"});
      out.attrs = CompAttrs{attrs.uint("comp_size"), attrs.str("op"), attrs.chunks()};
      break;
    case NodeKind::kCommColl: {
      attrs.allow_only({"coll_kind", "comm_size"});
      const std::string ck = attrs.str("coll_kind");
      auto coll = parse_collective_kind(ck);
      if (!coll) throw SchemaError(where + ": unknown coll_kind \"" + ck + "\"");
      out.attrs = CollAttrs{*coll, attrs.uint("comm_size")};
      break;
    }
  }
  return out;
}

inline ojson chunks_json(const ChunkList& chunks) {
  ojson arr = ojson::array();
  for (auto c : chunks) arr.push_back(c);
  return arr;
}

inline ojson node_to_json(const TraceNode& n) {
  ojson j;
  j["id"] = n.id;
  j["name"] = n.name;
  j["kind"] = std::string(to_string(n.kind()));
  ojson deps = ojson::array();
  for (auto d : n.deps) deps.push_back(d);
  j["deps"] = std::move(deps);
  ojson attrs = ojson::object();
  std::visit(
      [&](const auto& a) {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, SendAttrs>) {
          attrs["dst_rank"] = a.dst_rank;
          attrs["comm_size"] = a.comm_size;
          attrs["tag"] = a.tag;
          if (a.chunks) attrs["chunks"] = chunks_json(*a.chunks);
        } else if constexpr (std::is_same_v<A, RecvAttrs>) {
          attrs["src_rank"] = a.src_rank;
          attrs["comm_size"] = a.comm_size;
          attrs["tag"] = a.tag;
          if (a.chunks) attrs["chunks"] = chunks_json(*a.chunks);
        } else if constexpr (std::is_same_v<A, CompAttrs>) {
          attrs["comp_size"] = a.comp_size;
          attrs["op"] = a.op;
          if (a.chunks) attrs["chunks"] = chunks_json(*a.chunks);
        } else {
          attrs["coll_kind"] = std::string(to_string(a.coll_kind));
          attrs["comm_size"] = a.comm_size;
        }
      },
      n.attrs);
  j["attrs"] = std::move(attrs);
  return j;
}

}  // namespace detail

/// Parses a trace document and verifies the trace invariants.
inline Trace parse_trace(std::string_view text, const LoadOptions& options = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    auto [line, column] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError(e.what(), line, column);
  }

  detail::ObjectReader top(doc, "trace");
  top.allow_only({"format_version", "trace_class", "num_ranks", "claimed_collective", "ranks"});
  if (top.str("format_version") != kFormatVersion)
    throw SchemaError("unsupported format_version \"" + top.str("format_version") + "\"");

  Trace trace;
  const std::string cls = top.str("trace_class");
  if (cls == "collective") {
    trace.trace_class = TraceClass::kCollective;
  } else if (cls == "workload") {
    trace.trace_class = TraceClass::kWorkload;
  } else {
    throw SchemaError("unknown trace_class \"" + cls + "\"");
  }
  trace.num_ranks = detail::as_rank(top.uint("num_ranks"), "trace");

  const auto& claimed = top.at("claimed_collective");
  if (!claimed.is_null()) {
    detail::ObjectReader c(claimed, "claimed_collective");
    c.allow_only({"kind", "comm_size"});
    auto kind = parse_collective_kind(c.str("kind"));
    if (!kind) throw SchemaError("unknown claimed_collective kind \"" + c.str("kind") + "\"");
    trace.claimed_collective = ClaimedCollective{*kind, c.uint("comm_size")};
  }

  const auto& ranks = top.at("ranks");
  if (!ranks.is_array()) throw SchemaError("trace: \"ranks\" must be an array");
  for (std::size_t r = 0; r < ranks.size(); ++r) {
    const std::string where = "ranks[" + std::to_string(r) + "]";
    if (!ranks[r].is_array()) throw SchemaError(where + " must be an array");
    auto& nodes = trace.ranks.emplace_back();
    for (std::size_t i = 0; i < ranks[r].size(); ++i)
      nodes.push_back(detail::node_from_json(ranks[r][i], where + "[" + std::to_string(i) + "]"));
  }

  normalize(trace);
  check_structure(trace);
  if (options.check_matching) check_matching(trace);
  return trace;
}

/// Canonical text of a trace. Does not check invariants.
inline std::string serialize_trace(const Trace& input) {
  Trace trace = input;
  normalize(trace);
  std::string out = "{\n";
  out += "  \"format_version\": \"" + std::string(kFormatVersion) + "\",\n";
  out += "  \"trace_class\": \"" + std::string(to_string(trace.trace_class)) + "\",\n";
  out += "  \"num_ranks\": " + std::to_string(trace.num_ranks) + ",\n";
  out += "  \"claimed_collective\": ";
  if (trace.claimed_collective) {
    detail::ojson c;
    c["kind"] = std::string(to_string(trace.claimed_collective->kind));
    c["comm_size"] = trace.claimed_collective->comm_size;
    out += c.dump();
  } else {
    out += "null";
  }
  out += ",\n  \"ranks\": [";
  for (std::size_t r = 0; r < trace.ranks.size(); ++r) {
    out += r ? ",\n    [" : "\n    [";
    const auto& nodes = trace.ranks[r];
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      out += i ? ",\n      " : "\n      ";
      out += detail::node_to_json(nodes[i]).dump();
    }
    out += nodes.empty() ? "]" : "\n    ]";
  }
  out += trace.ranks.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

inline Trace load_trace(const std::filesystem::path& path, const LoadOptions& options = {}) {
  return parse_trace(read_file(path), options);
}

/// Checks all invariants, then writes the canonical form.
inline void save_trace(const Trace& trace, const std::filesystem::path& path) {
  check_invariants(trace);
  write_file(path, serialize_trace(trace));
}

}  // namespace collgraph
