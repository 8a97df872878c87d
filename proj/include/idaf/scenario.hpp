#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "idaf/configuration.hpp"
#include "idaf/topology.hpp"
#include "idaf/trace.hpp"
#include "idaf/transport.hpp"

namespace idaf {

// One timed script step.  Supported actions: join (optional scripted plan),
// leave, fail, snapshot, run-demo.
struct ScenarioAction {
  std::uint64_t at{0};
  std::string action;
  std::map<std::string, std::string> args;
  std::string plan_type;                                   // join only
  std::vector<std::pair<std::string, NodeId>> plan_binds;  // join only
};

struct Scenario {
  std::string topology;  // builtin name, or a path to a declarative file
  std::string ida;
  std::uint32_t nodes{0};
  SimParams sim;
  std::uint64_t tick_ms{50};
  RepairPolicy repair{RepairPolicy::freeze};
  std::vector<ScenarioAction> script;
};

// Throws std::runtime_error on unreadable or ill-formed input, including a
// script whose timestamps decrease.
Scenario load_scenario_file(const std::string& path);
Scenario scenario_from_json(const std::string& text);

struct SnapshotResult {
  std::uint64_t at{0};
  std::uint32_t members{0};
  std::uint32_t edges{0};
  std::uint32_t frozen{0};
  bool ida_failed{false};
  std::vector<Violation> violations;
};

struct JoinMetric {
  NodeId node{0};
  bool joined{false};
  std::uint64_t at{0};        // virtual completion time
  std::uint32_t commands{0};  // command round trips spent
};

struct ScenarioReport {
  bool ok{true};          // every snapshot verified clean
  bool usage_error{false};  // script referenced an unknown node or action
  std::vector<std::string> errors;
  std::vector<SnapshotResult> snapshots;
  std::vector<std::string> demo_notes;  // one line per run-demo action
  std::vector<JoinMetric> joins;
  std::uint32_t joins_attempted{0};
  std::uint32_t joins_completed{0};
  std::string dot;  // graph at graph_at, when requested
  bool graph_truncated{false};  // graph_at was past the script end
};

// Executes the script on a fresh simulated cluster.  When graph_at is set,
// the DOT export of the configuration at that virtual time lands in the
// report (running only that far if the script is longer).
ScenarioReport run_scenario(const Scenario& scenario, TraceWriter trace,
                            std::optional<std::uint64_t> graph_at = std::nullopt);

}  // namespace idaf
