#include "idaf/scenario.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "idaf/builtin_topologies.hpp"
#include "idaf/demo_dft.hpp"
#include "idaf/demo_rooms.hpp"
#include "idaf/runtime.hpp"
#include "idaf/topology_io.hpp"

namespace idaf {

namespace {

using nlohmann::json;

std::string as_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

SimParams sim_from_json(const json& j) {
  SimParams p;
  if (j.contains("latency_min")) p.latency_min = j["latency_min"].get<std::uint64_t>();
  if (j.contains("latency_max")) p.latency_max = j["latency_max"].get<std::uint64_t>();
  if (j.contains("drop_probability")) p.drop_probability = j["drop_probability"].get<double>();
  if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("attempts")) p.attempts = j["attempts"].get<std::uint32_t>();
  if (j.contains("retry_timeout")) p.retry_timeout = j["retry_timeout"].get<std::uint64_t>();
  if (j.contains("payload_limit")) p.payload_limit = j["payload_limit"].get<std::size_t>();
  if (j.contains("partitions")) {
    for (const auto& island : j["partitions"]) {
      std::set<NodeId> ids;
      for (const auto& n : island) ids.insert(n.get<NodeId>());
      p.partitions.push_back(std::move(ids));
    }
  }
  return p;
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("scenario is not valid JSON: ") + e.what());
  }
  Scenario sc;
  if (!j.contains("topology") || !j.contains("ida"))
    throw std::runtime_error("scenario needs topology and ida fields");
  sc.topology = j["topology"].get<std::string>();
  sc.ida = j["ida"].get<std::string>();
  sc.nodes = j.value("nodes", 0u);
  if (j.contains("sim_params")) sc.sim = sim_from_json(j["sim_params"]);
  sc.tick_ms = j.value("tick_ms", std::uint64_t{50});
  if (j.value("repair", "freeze") == std::string("promote")) sc.repair = RepairPolicy::promote;

  std::uint64_t last_at = 0;
  for (const auto& step : j.value("script", json::array())) {
    ScenarioAction a;
    a.at = step.value("at", std::uint64_t{0});
    if (a.at < last_at)
      throw std::runtime_error("script timestamps decrease at t=" + std::to_string(a.at));
    last_at = a.at;
    a.action = step.value("action", "");
    if (step.contains("args")) {
      for (auto it = step["args"].begin(); it != step["args"].end(); ++it) {
        if (it.key() == "plan" && it.value().is_object()) {
          const json& plan = it.value();
          a.plan_type = plan.value("type", "");
          if (plan.contains("bindings"))
            for (auto b = plan["bindings"].begin(); b != plan["bindings"].end(); ++b)
              a.plan_binds.emplace_back(b.key(), b.value().get<NodeId>());
          continue;
        }
        a.args[it.key()] = as_string(it.value());
      }
    }
    sc.script.push_back(std::move(a));
  }
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return scenario_from_json(buf.str());
}

namespace {

struct Runner {
  const Scenario& sc;
  ScenarioReport& rep;
  SimCluster& cluster;

  void usage(const std::string& what) {
    rep.usage_error = true;
    rep.errors.push_back(what);
  }

  std::optional<NodeId> node_arg(const ScenarioAction& a) {
    auto it = a.args.find("node");
    if (it == a.args.end()) {
      usage(a.action + " needs a node argument");
      return std::nullopt;
    }
    NodeId n = 0;
    try {
      n = std::stoull(it->second);
    } catch (const std::exception&) {
      usage("bad node id: " + it->second);
      return std::nullopt;
    }
    if (n == 0 || n > sc.nodes) {
      usage("unknown node: " + it->second);
      return std::nullopt;
    }
    return n;
  }

  void snapshot() {
    SnapshotResult s;
    s.at = cluster.world().now();
    if (auto* cfg = cluster.configuration(sc.ida)) {
      s.members = static_cast<std::uint32_t>(cfg->members.size());
      s.edges = static_cast<std::uint32_t>(cfg->connections.size());
      s.frozen = static_cast<std::uint32_t>(cfg->frozen.size());
      s.ida_failed = cfg->failed;
      s.violations = verify(*cfg);
    }
    if (!s.violations.empty()) rep.ok = false;
    rep.snapshots.push_back(std::move(s));
  }

  void run_demo(const ScenarioAction& a) {
    const std::string which = a.args.count("demo") ? a.args.at("demo") : "";
    auto num = [&](const char* key, std::uint64_t fallback) -> std::uint64_t {
      auto it = a.args.find(key);
      if (it == a.args.end()) return fallback;
      return std::stoull(it->second);
    };
    if (which == "dft") {
      DftDemoParams p;
      p.leaves = static_cast<std::uint32_t>(num("leaves", 3));
      p.blocks = static_cast<std::uint32_t>(num("blocks", 8));
      p.samples = static_cast<std::uint32_t>(num("samples", 256));
      p.stats = a.args.count("stats") && a.args.at("stats") == "true";
      p.seed = num("seed", sc.sim.seed);
      auto d = run_dft_demo(p);
      std::ostringstream line;
      line << "demo-dft " << (d.ok ? "ok" : "FAILED") << " max_error=" << d.max_error;
      if (!d.error.empty()) line << " (" << d.error << ")";
      rep.demo_notes.push_back(line.str());
      if (!d.ok) rep.ok = false;
      return;
    }
    if (which == "rooms") {
      RoomsDemoParams p;
      p.steps = num("steps", 100);
      p.seed = num("seed", sc.sim.seed);
      auto d = run_rooms_demo(p);
      std::ostringstream line;
      line << "demo-rooms " << (d.ok ? "ok" : "FAILED") << " cookies=" << d.final_cookies;
      if (!d.error.empty()) line << " (" << d.error << ")";
      rep.demo_notes.push_back(line.str());
      if (!d.ok) rep.ok = false;
      return;
    }
    usage("unknown demo: " + which);
  }

  void execute(const ScenarioAction& a) {
    if (a.action == "join") {
      auto n = node_arg(a);
      if (!n) return;
      ++rep.joins_attempted;
      try {
        if (!a.plan_type.empty() || !a.plan_binds.empty()) {
          JoinPlan plan;
          plan.node_type = a.plan_type;
          for (const auto& [tmpl, peer] : a.plan_binds) plan.bindings.push_back({tmpl, peer});
          cluster.container(*n)->participate(sc.ida, plan);
        } else {
          cluster.container(*n)->participate(sc.ida);
        }
      } catch (const std::invalid_argument& e) {
        usage(e.what());
      }
      return;
    }
    if (a.action == "leave") {
      auto n = node_arg(a);
      if (!n) return;
      try {
        cluster.container(*n)->withdraw(sc.ida);
      } catch (const std::invalid_argument& e) {
        usage(e.what());
      }
      return;
    }
    if (a.action == "fail") {
      auto n = node_arg(a);
      if (!n) return;
      cluster.fail_node(*n);
      return;
    }
    if (a.action == "snapshot") {
      snapshot();
      return;
    }
    if (a.action == "run-demo") {
      run_demo(a);
      return;
    }
    usage("unknown action: " + a.action);
  }
};

}  // namespace

ScenarioReport run_scenario(const Scenario& scenario, TraceWriter trace,
                            std::optional<std::uint64_t> graph_at) {
  ScenarioReport rep;

  TopologySpec spec;
  if (auto builtin = find_builtin(scenario.topology)) {
    spec = *builtin;
  } else {
    spec = load_topology_file(scenario.topology);
  }

  ClusterParams cp;
  cp.sim = scenario.sim;
  cp.tick_ms = scenario.tick_ms;
  cp.repair = scenario.repair;
  SimCluster cluster(cp);
  cluster.set_trace(std::move(trace));

  Advertisement adv;
  adv.kind = "ida";
  adv.name = scenario.ida;
  adv.id = "ida/" + scenario.ida;
  adv.spec_ref = spec.name;

  Nodeletset set;
  for (const auto& type : spec.node_types)
    set.factories[type] = [] { return std::make_unique<Nodelet>(); };

  for (NodeId n = 1; n <= scenario.nodes; ++n) cluster.add_node(n);
  cluster.register_everywhere(adv, spec, set);
  cluster.start_ticks();

  Runner runner{scenario, rep, cluster};

  bool graph_done = false;
  auto capture_graph = [&] {
    if (auto* cfg = cluster.configuration(scenario.ida)) {
      rep.dot = to_dot(to_graph(*cfg));
    } else {
      GraphExport g;
      g.ida = scenario.ida;
      rep.dot = to_dot(g);
    }
    graph_done = true;
  };

  for (const auto& action : scenario.script) {
    if (graph_at && !graph_done && *graph_at <= action.at) {
      cluster.world().run_until(*graph_at);
      capture_graph();
    }
    cluster.world().run_until(action.at);
    runner.execute(action);
    if (rep.usage_error) break;
  }

  // Let in-flight joins and command timeouts settle before the final word.
  const std::uint64_t settle = cluster.world().now() + 10000;
  cluster.world().run_until(settle);

  if (graph_at && !graph_done) {
    if (*graph_at > cluster.world().now()) {
      rep.graph_truncated = true;
    } else {
      cluster.world().run_until(*graph_at);
    }
    capture_graph();
  }
  cluster.stop_ticks();

  for (const auto& j : cluster.join_log()) {
    if (j.joined) ++rep.joins_completed;
    rep.joins.push_back({j.node, j.joined, j.at, j.commands});
  }
  cluster.trace().flush();
  return rep;
}

}  // namespace idaf
