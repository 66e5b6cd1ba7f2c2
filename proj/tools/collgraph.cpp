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

// Command-line front end: gen, convert, validate, expand, simulate, sweep.
//
// Exit codes: 0 success or PASS, 2 usage/input error, 3 validation FAIL,
// 4 stuck or deadlocked execution.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "collgraph/collgraph.hpp"

namespace {

using namespace collgraph;

constexpr int kExitOk = 0;
constexpr int kExitError = 2;
constexpr int kExitFail = 3;
constexpr int kExitStuck = 4;

void setup_logging() {
  auto logger = spdlog::stderr_logger_st("collgraph");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("COLLGRAPH_LOG"))
    spdlog::set_level(spdlog::level::from_str(level));
}

void emit(const std::string& out_path, const std::string& contents) {
  if (out_path.empty() || out_path == "-") {
    std::cout << contents;
    std::cout.flush();
  } else {
    write_file(out_path, contents);
    spdlog::info("wrote {} ({} bytes)", out_path, contents.size());
  }
}

std::string emit_trace(const std::string& out_path, const Trace& trace) {
  check_invariants(trace);
  const std::string text = serialize_trace(trace);
  emit(out_path, text);
  return text;
}

nlohmann::ordered_json contributions_json(const ContributionSet& set) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& c : set) out.push_back({c.origin, c.chunk});
  return out;
}

nlohmann::ordered_json pending_json(const std::vector<PendingNode>& nodes) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& p : nodes) out.push_back({{"rank", p.rank}, {"id", p.id}});
  return out;
}

int run_validate(const std::string& path, const std::string& out_path) {
  using ojson = nlohmann::ordered_json;
  LoadOptions load;
  load.check_matching = false;
  Trace trace = load_trace(path, load);

  ojson report;
  int code = kExitOk;
  try {
    Verdict v = check_semantics(trace);
    report["verdict"] = std::string(to_string(v.status));
    ojson violations = ojson::array();
    for (const auto& x : v.violations) {
      ojson e;
      e["rank"] = x.rank;
      e["chunk"] = x.chunk ? ojson(*x.chunk) : ojson(nullptr);
      e["node"] = x.node ? ojson(*x.node) : ojson(nullptr);
      e["expected"] = contributions_json(x.expected);
      e["actual"] = contributions_json(x.actual);
      e["message"] = x.message;
      violations.push_back(std::move(e));
    }
    report["violations"] = std::move(violations);
    report["stuck_nodes"] = ojson::array();
    report["warnings"] = v.warnings;
    if (v.status == VerdictStatus::kFail) code = kExitFail;
    for (const auto& w : v.warnings) spdlog::warn("{}", w);
  } catch (const StuckError& e) {
    report["verdict"] = "STUCK";
    report["violations"] = ojson::array();
    report["stuck_nodes"] = pending_json(e.frontier());
    report["warnings"] = ojson::array();
    code = kExitStuck;
  }
  emit(out_path, report.dump(2) + "\n");
  return code;
}

Binding parse_binding_value(const std::string& value) {
  if (auto algo = parse_algorithm(value)) return AlgoSpec{*algo, 0, 0};
  return load_trace(value);
}

std::vector<SweepTopology> parse_topology_list(const std::string& list, Rank n) {
  std::vector<SweepTopology> out;
  std::size_t pos = 0;
  for (;;) {
    auto comma = list.find(',', pos);
    std::string item = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back({item, parse_topology(item, n)});
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Collective algorithm traces: generate, convert, validate, expand and simulate"};
  app.require_subcommand(1);

  // gen
  std::string gen_algo;
  Rank gen_ranks = 0;
  std::string gen_size;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a collective algorithm trace");
  gen->add_option("--algo", gen_algo, "ring-allreduce | ring-allgather | rd-allgather")->required();
  gen->add_option("--ranks", gen_ranks, "Number of ranks")->required();
  gen->add_option("--size", gen_size, "Collective size in bytes (KiB/MiB/GiB suffixes allowed)")
      ->required();
  gen->add_option("-o,--output", gen_out, "Output trace file (default stdout)");

  // convert
  std::string conv_xml;
  std::string conv_size;
  std::string conv_out;
  auto* convert = app.add_subcommand("convert", "Convert an MSCCL-IR XML algorithm to a trace");
  convert->add_option("--msccl-xml", conv_xml, "MSCCL-IR XML file")->required();
  convert->add_option("--size", conv_size, "Collective size in bytes (KiB/MiB/GiB suffixes allowed)")
      ->required();
  convert->add_option("-o,--output", conv_out, "Output trace file (default stdout)");

  // validate
  std::string val_trace;
  std::string val_out;
  auto* validate = app.add_subcommand(
      "validate", "Check matching, deadlock freedom and collective semantics; exit 0/3/4");
  validate->add_option("trace", val_trace, "Trace file")->required();
  validate->add_option("-o,--output", val_out, "Verdict JSON file (default stdout)");

  // expand
  std::string exp_workload;
  std::vector<std::string> exp_binds;
  std::string exp_out;
  auto* expand_cmd = app.add_subcommand("expand", "Replace COMM_COLL nodes with algorithm subgraphs");
  expand_cmd->add_option("--workload", exp_workload, "Workload trace file")->required();
  expand_cmd->add_option("--bind", exp_binds,
                         "KIND=ALGO or KIND=FILE, e.g. ALL_REDUCE=ring-allreduce (repeatable)");
  expand_cmd->add_option("-o,--output", exp_out, "Output trace file (default stdout)");

  // simulate
  std::string sim_trace;
  std::string sim_net;
  std::string sim_topology;
  std::string sim_out;
  auto* simulate_cmd = app.add_subcommand("simulate", "Replay a trace on an analytical network");
  simulate_cmd->add_option("trace", sim_trace, "Trace file")->required();
  simulate_cmd->add_option("--net", sim_net, "Network config JSON")->required();
  simulate_cmd->add_option("--topology", sim_topology,
                           "Override the config topology: ring | fc | switch | mesh2d:RxC | torus2d:RxC");
  simulate_cmd->add_option("-o,--output", sim_out, "Report JSON file (default stdout)");

  // sweep
  std::string sw_algo;
  Rank sw_ranks = 0;
  std::string sw_sizes;
  std::string sw_topologies;
  std::string sw_net;
  std::string sw_baseline = "ring";
  unsigned sw_jobs = 1;
  std::string sw_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Simulate an algorithm over topologies and sizes");
  sweep_cmd->add_option("--algo", sw_algo, "ring-allreduce | ring-allgather | rd-allgather")->required();
  sweep_cmd->add_option("--ranks", sw_ranks, "Number of ranks")->required();
  sweep_cmd->add_option("--sizes", sw_sizes, "Comma list of sizes or lo:hi:xK ranges")->required();
  sweep_cmd->add_option("--topologies", sw_topologies, "Comma list, e.g. ring,fc,mesh2d:8x8,switch")
      ->required();
  sweep_cmd->add_option("--net", sw_net, "Network config JSON (cost parameters)")->required();
  sweep_cmd->add_option("--baseline", sw_baseline, "Baseline topology for the slowdown column")
      ->capture_default_str();
  sweep_cmd->add_option("--jobs", sw_jobs, "Parallel simulations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("-o,--output", sw_out, "Output CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*gen) {
      auto algo = parse_algorithm(gen_algo);
      if (!algo) throw SpecError("unknown algorithm \"" + gen_algo + "\"");
      Trace trace = generate(AlgoSpec{*algo, gen_ranks, parse_size(gen_size)});
      spdlog::info("generated {} nodes", trace.node_count());
      emit_trace(gen_out, trace);
    } else if (*convert) {
      auto prog = msccl::parse_xml_file(conv_xml);
      Trace trace = msccl::convert_to_trace(prog, parse_size(conv_size));
      spdlog::info("converted {} steps into {} nodes", prog.step_count(), trace.node_count());
      emit_trace(conv_out, trace);
    } else if (*validate) {
      return run_validate(val_trace, val_out);
    } else if (*expand_cmd) {
      BindingMap bindings;
      for (const auto& b : exp_binds) {
        auto eq = b.find('=');
        if (eq == std::string::npos) throw BindingError("--bind expects KIND=ALGO|FILE, got \"" + b + "\"");
        auto kind = parse_collective_kind(b.substr(0, eq));
        if (!kind) throw BindingError("unknown collective kind \"" + b.substr(0, eq) + "\"");
        bindings.insert_or_assign(*kind, parse_binding_value(b.substr(eq + 1)));
      }
      const std::string original = read_file(exp_workload);
      Trace workload = parse_trace(original);
      Trace out = expand(workload, bindings);
      if (out == workload) emit(exp_out, original);
      else emit_trace(exp_out, out);
    } else if (*simulate_cmd) {
      Trace trace = load_trace(sim_trace);
      NetConfig net = load_net_config(sim_net);
      std::optional<Topology> topo;
      if (!sim_topology.empty()) topo = parse_topology(sim_topology, trace.num_ranks);
      else if (net.topology) topo = make_topology(*net.topology, trace.num_ranks);
      else throw SchemaError("network config has no topology and --topology was not given");
      SimReport report = simulate(trace, *topo, net.cost);
      spdlog::info("total duration {} s over {} events", report.total_duration, report.event_count);
      emit(sim_out, serialize_report(report, *topo));
    } else if (*sweep_cmd) {
      auto algo = parse_algorithm(sw_algo);
      if (!algo) throw SpecError("unknown algorithm \"" + sw_algo + "\"");
      NetConfig net = load_net_config(sw_net);
      SweepOptions opts;
      opts.jobs = sw_jobs;
      opts.baseline = sw_baseline;
      auto rows = sweep(*algo, sw_ranks, parse_size_list(sw_sizes),
                        parse_topology_list(sw_topologies, sw_ranks), net.cost, opts);
      emit(sw_out, sweep_csv(rows));
    }
  } catch (const StuckError& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return kExitStuck;
  } catch (const DeadlockError& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return kExitStuck;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}
