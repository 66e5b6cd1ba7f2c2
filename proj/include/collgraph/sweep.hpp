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
#include <cstdio>
#include <exception>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "collgraph/generators.hpp"
#include "collgraph/simulator.hpp"
#include "collgraph/topology.hpp"

namespace collgraph {

/// Parses a byte count with an optional binary suffix: B, KiB, MiB, GiB.
inline Bytes parse_size(std::string_view text) {
  std::size_t digits = 0;
  while (digits < text.size() && text[digits] >= '0' && text[digits] <= '9') ++digits;
  if (digits == 0) throw SpecError("bad size \"" + std::string(text) + "\"");
  Bytes value = 0;
  for (std::size_t i = 0; i < digits; ++i) {
    if (value > (std::numeric_limits<Bytes>::max() - 9) / 10)
      throw SpecError("size \"" + std::string(text) + "\" is too large");
    value = value * 10 + static_cast<Bytes>(text[i] - '0');
  }
  const auto suffix = text.substr(digits);
  unsigned shift = 0;
  if (suffix.empty() || suffix == "B") shift = 0;
  else if (suffix == "KiB") shift = 10;
  else if (suffix == "MiB") shift = 20;
  else if (suffix == "GiB") shift = 30;
  else throw SpecError("unknown size suffix \"" + std::string(suffix) + "\"");
  if (shift && value > (std::numeric_limits<Bytes>::max() >> shift))
    throw SpecError("size \"" + std::string(text) + "\" is too large");
  return value << shift;
}

/// Parses a comma list whose items are sizes or geometric ranges
/// "lo:hi:xK" (lo, lo*K, lo*K^2, ... up to and including hi). Result is
/// sorted ascending without duplicates.
inline std::vector<Bytes> parse_size_list(std::string_view text) {
  std::vector<Bytes> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    auto item = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    auto c1 = item.find(':');
    if (c1 == std::string_view::npos) {
      out.push_back(parse_size(item));
    } else {
      auto c2 = item.find(':', c1 + 1);
      if (c2 == std::string_view::npos || item.size() < c2 + 3 || item[c2 + 1] != 'x')
        throw SpecError("size range must look like lo:hi:xK, got \"" + std::string(item) + "\"");
      const Bytes lo = parse_size(item.substr(0, c1));
      const Bytes hi = parse_size(item.substr(c1 + 1, c2 - c1 - 1));
      const Bytes factor = parse_size(item.substr(c2 + 2));
      if (lo == 0 || lo > hi || factor < 2)
        throw SpecError("size range \"" + std::string(item) + "\" needs 0 < lo <= hi and K >= 2");
      for (Bytes s = lo; s <= hi; s *= factor) {
        out.push_back(s);
        if (s > hi / factor) break;
      }
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct SweepTopology {
  std::string label;
  Topology topology;
};

struct SweepRow {
  std::string topology;
  Bytes size = 0;
  double duration_s = 0.0;
  double slowdown = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepOptions {
  unsigned jobs = 1;
  std::string baseline = "ring";
};

/// Simulates `algorithm` on every (topology, size) cell. Rows come out in the
/// given topology order, sizes ascending. Slowdown divides by the baseline
/// topology's duration at the same size; the baseline is simulated even when
/// it is not in `topologies`. Worker count never changes the result.
inline std::vector<SweepRow> sweep(Algorithm algorithm, Rank num_ranks, std::vector<Bytes> sizes,
                                   const std::vector<SweepTopology>& topologies, const CostModel& cost,
                                   const SweepOptions& options = {}) {
  cost.check();
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());

  std::vector<SweepTopology> cells_topo = topologies;
  std::size_t baseline = cells_topo.size();
  for (std::size_t t = 0; t < cells_topo.size(); ++t)
    if (cells_topo[t].label == options.baseline) {
      baseline = t;
      break;
    }
  if (baseline == cells_topo.size())
    cells_topo.push_back({options.baseline, parse_topology(options.baseline, num_ranks)});

  const std::size_t cells = cells_topo.size() * sizes.size();
  std::vector<double> durations(cells, 0.0);
  std::vector<std::exception_ptr> errors(cells);
  auto run_cell = [&](std::size_t cell) {
    const auto& topo = cells_topo[cell / sizes.size()];
    const Bytes size = sizes[cell % sizes.size()];
    try {
      Trace trace = generate(AlgoSpec{algorithm, num_ranks, size});
      durations[cell] = simulate(trace, topo.topology, cost).total_duration;
    } catch (const Error& e) {
      errors[cell] = std::make_exception_ptr(
          SpecError("sweep cell " + topo.label + " size " + std::to_string(size) + ": " + e.what()));
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(cells)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < cells; ++c) run_cell(c);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t cell;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cells) return;
            cell = next++;
          }
          run_cell(cell);
        }
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SweepRow> rows;
  for (std::size_t t = 0; t < topologies.size(); ++t)
    for (std::size_t s = 0; s < sizes.size(); ++s) {
      const double d = durations[t * sizes.size() + s];
      const double base = durations[baseline * sizes.size() + s];
      rows.push_back({topologies[t].label, sizes[s], d, base > 0 ? d / base : 1.0});
    }
  return rows;
}

/// CSV with header `topology,size_bytes,duration_s,slowdown`; doubles as %.17g.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "topology,size_bytes,duration_s,slowdown\n";
  char buf[64];
  for (const auto& r : rows) {
    out += r.topology;
    out += ',';
    out += std::to_string(r.size);
    std::snprintf(buf, sizeof buf, ",%.17g", r.duration_s);
    out += buf;
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.slowdown);
    out += buf;
  }
  return out;
}

}  // namespace collgraph
