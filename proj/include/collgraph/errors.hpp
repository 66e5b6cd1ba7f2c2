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
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace collgraph {

/// Base for every error raised by the library. `code()` names the error
/// family so that the CLI can render a stable message prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define COLLGRAPH_DEFINE_ERROR(Name)                              \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

// trace-model
COLLGRAPH_DEFINE_ERROR(IoError)
COLLGRAPH_DEFINE_ERROR(SchemaError)
// generators
COLLGRAPH_DEFINE_ERROR(SpecError)
// msccl-ingest
COLLGRAPH_DEFINE_ERROR(XmlError)
COLLGRAPH_DEFINE_ERROR(RefError)
COLLGRAPH_DEFINE_ERROR(MatchError)
COLLGRAPH_DEFINE_ERROR(SizeError)
// simulator
COLLGRAPH_DEFINE_ERROR(UnexpandedCollectiveError)
COLLGRAPH_DEFINE_ERROR(UnreachableError)
// expander
COLLGRAPH_DEFINE_ERROR(BindingError)
COLLGRAPH_DEFINE_ERROR(OverflowError)

#undef COLLGRAPH_DEFINE_ERROR

/// Malformed trace document. Position is a 1-based line/column when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("ParseError", what + " (line " + std::to_string(line) + ", column " +
                                std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A structural invariant of a trace does not hold.
class InvariantError : public Error {
 public:
  InvariantError(const std::string& what, std::uint32_t rank, std::uint64_t node_id)
      : Error("InvariantError", what + " (rank " + std::to_string(rank) + ", node " +
                                    std::to_string(node_id) + ")"),
        rank_(rank),
        node_id_(node_id) {}

  std::uint32_t rank() const noexcept { return rank_; }
  std::uint64_t node_id() const noexcept { return node_id_; }

 private:
  std::uint32_t rank_;
  std::uint64_t node_id_;
};

/// Dependency cycle inside one rank. `cycle()` lists node ids along the cycle.
class CycleError : public InvariantError {
 public:
  CycleError(std::uint32_t rank, std::vector<std::uint64_t> cycle)
      : InvariantError("dependency cycle " + render(cycle), rank,
                       cycle.empty() ? 0 : cycle.front()),
        cycle_(std::move(cycle)) {}

  const std::vector<std::uint64_t>& cycle() const noexcept { return cycle_; }

 private:
  static std::string render(const std::vector<std::uint64_t>& ids) {
    std::string out = "[";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(ids[i]);
    }
    return out + "]";
  }

  std::vector<std::uint64_t> cycle_;
};

/// (rank, node id) of a node that could not make progress.
struct PendingNode {
  std::uint32_t rank = 0;
  std::uint64_t id = 0;

  friend bool operator==(const PendingNode&, const PendingNode&) = default;
  friend auto operator<=>(const PendingNode&, const PendingNode&) = default;
};

inline std::string render_pending(const std::vector<PendingNode>& nodes) {
  std::string out = "[";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i) out += ", ";
    out += "rank " + std::to_string(nodes[i].rank) + " node " + std::to_string(nodes[i].id);
  }
  return out + "]";
}

/// Symbolic execution reached a state where pending nodes can never run.
class StuckError : public Error {
 public:
  explicit StuckError(std::vector<PendingNode> frontier)
      : Error("StuckError", "execution stuck; frontier " + render_pending(frontier)),
        frontier_(std::move(frontier)) {}

  const std::vector<PendingNode>& frontier() const noexcept { return frontier_; }

 private:
  std::vector<PendingNode> frontier_;
};

/// Simulation ran out of events while nodes were still pending.
class DeadlockError : public Error {
 public:
  explicit DeadlockError(std::vector<PendingNode> frontier)
      : Error("DeadlockError", "simulation deadlocked; pending " + render_pending(frontier)),
        frontier_(std::move(frontier)) {}

  const std::vector<PendingNode>& frontier() const noexcept { return frontier_; }

 private:
  std::vector<PendingNode> frontier_;
};

}  // namespace collgraph
