#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "idaf/builtin_topologies.hpp"
#include "idaf/runtime.hpp"
#include "oracle_legality.hpp"

using namespace idaf;

namespace {

// Hook log for one nodelet instance.  Held by shared_ptr so it stays
// readable after the instance itself is destroyed by a swap or withdrawal.
struct ProbeStats {
  std::string tag;
  NodeletServices svc;
  int starts{0};
  int stops{0};
  int ticks{0};
  int counter{0};
  std::vector<std::string> got;
  std::string restored_from;
  bool restore_hit{false};
};

// Instrumented nodelet: records every hook call and the services it was
// given, so tests can assert on lifecycle order from the outside.
struct Probe : Nodelet {
  std::shared_ptr<ProbeStats> st;
  bool consume{false};
  bool stateful{false};
  std::string reply_prefix;
  std::function<void(ProbeStats&, std::uint64_t)> tick_fn;

  void on_start(const NodeletServices& s) override {
    st->svc = s;
    ++st->starts;
  }
  void on_message(Port& port, const std::string& payload) override {
    if (!consume) {
      Nodelet::on_message(port, payload);
      return;
    }
    st->got.push_back(payload);
    if (!reply_prefix.empty()) port.send(reply_prefix + payload);
  }
  void on_tick(std::uint64_t t) override {
    ++st->ticks;
    ++st->counter;
    if (tick_fn) tick_fn(*st, t);
  }
  void on_stop() override { ++st->stops; }
  std::optional<std::string> dump_state() override {
    if (!stateful) return std::nullopt;
    return "c=" + std::to_string(st->counter);
  }
  bool restore_state(const std::string& s) override {
    if (!stateful) return false;
    st->restored_from = s;
    st->restore_hit = true;
    if (s.rfind("c=", 0) == 0) st->counter = std::stoi(s.substr(2));
    return true;
  }
};

// Factory front-end that keeps the stats of every instance it makes.
// Must outlive the cluster that holds the factories.
struct ProbeRig {
  std::vector<std::shared_ptr<ProbeStats>> made;
  bool consume{false};
  bool stateful{false};
  std::string reply_prefix;
  std::function<void(ProbeStats&, std::uint64_t)> tick_fn;

  NodeletFactory factory(std::string type) {
    return [this, type]() -> std::unique_ptr<Nodelet> {
      auto stats = std::make_shared<ProbeStats>();
      stats->tag = type;
      made.push_back(stats);
      auto p = std::make_unique<Probe>();
      p->st = stats;
      p->consume = consume;
      p->stateful = stateful;
      p->reply_prefix = reply_prefix;
      p->tick_fn = tick_fn;
      return p;
    };
  }

  Nodeletset covering(const TopologySpec& spec) {
    Nodeletset ns;
    for (const auto& t : spec.node_types) ns.factories[t] = factory(t);
    return ns;
  }

  // Latest started instance for (node, ida).
  ProbeStats* find(NodeId node, const std::string& ida) {
    for (auto it = made.rbegin(); it != made.rend(); ++it)
      if ((*it)->starts > 0 && (*it)->svc.self == node && (*it)->svc.ida == ida)
        return it->get();
    return nullptr;
  }
};

Advertisement ida_ad(const std::string& name, const std::string& topo) {
  Advertisement a;
  a.kind = "ida";
  a.name = name;
  a.id = "ad:" + name;
  a.spec_ref = topo;
  return a;
}

ClusterParams tight(std::uint64_t seed) {
  ClusterParams p;
  p.sim.latency_min = 1;
  p.sim.latency_max = 1;
  p.sim.seed = seed;
  return p;
}

void settle(SimCluster& cl) { cl.world().run_until_idle(); }

}  // namespace

TEST_CASE("registering requires a nodelet for every node type") {
  TopologySpec spec = star();
  ProbeRig rig;
  SimCluster cl(tight(1));
  Container& c1 = cl.add_node(1);

  Nodeletset leaf_only;
  leaf_only.factories["leaf"] = rig.factory("leaf");
  CHECK_THROWS_WITH_AS(c1.register_ida(ida_ad("app", "star"), spec, leaf_only),
                       "root uncovered", std::invalid_argument);
  CHECK_FALSE(c1.knows("app"));

  c1.register_ida(ida_ad("app", "star"), spec, rig.covering(spec));
  CHECK(c1.knows("app"));
  CHECK_THROWS_AS(c1.participate("ghost"), std::invalid_argument);
}

TEST_CASE("first participant boots; later joiners plan against the live view") {
  TopologySpec spec = star();
  ProbeRig rig;
  SimCluster cl(tight(7));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));

  IdaContext& ctx1 = cl.container(1)->participate("app");
  settle(cl);
  CHECK(ctx1.phase() == Phase::running);
  CHECK(ctx1.node_type() == "root");
  CHECK(ctx1.ports().empty());
  CHECK(ctx1.join_commands() == 0);
  REQUIRE(cl.join_log().size() == 1);
  CHECK(cl.join_log()[0].node == 1);
  CHECK(cl.join_log()[0].joined);
  CHECK(cl.join_log()[0].commands == 0);

  IdaContext& ctx2 = cl.container(2)->participate("app");
  settle(cl);
  CHECK(ctx2.phase() == Phase::running);
  CHECK(ctx2.node_type() == "leaf");
  REQUIRE(ctx2.ports().size() == 1);
  Port* p = ctx2.ports()[0];
  CHECK(p->remote() == 1);
  CHECK(p->remote_type() == "root");
  CHECK(p->tmpl() == "L_to_R");
  CHECK(p->alive());
  REQUIRE(cl.join_log().size() == 2);
  CHECK(cl.join_log()[1].node == 2);
  CHECK(cl.join_log()[1].joined);
  // one rendezvous query plus one reservation; the commit notice lands after
  // the outcome is recorded
  CHECK(cl.join_log()[1].commands == 2);
  CHECK(ctx2.join_commands() == 3);

  // the root's side of the new connection appears without any local call
  REQUIRE(ctx1.ports().size() == 1);
  CHECK(ctx1.ports()[0]->tmpl() == "R_to_L");
  CHECK(ctx1.ports()[0]->remote() == 2);
  CHECK(ctx1.ports()[0]->remote_type() == "leaf");

  cl.container(3)->participate("app");
  settle(cl);
  CHECK(ctx1.ports().size() == 2);

  Configuration* cfg = cl.configuration("app");
  REQUIRE(cfg);
  CHECK(verify(*cfg).empty());
  CHECK(oracle::check(*cfg).empty());

  ProbeStats* probe2 = rig.find(2, "app");
  REQUIRE(probe2);
  CHECK(probe2->starts == 1);
  CHECK(probe2->svc.self == 2);
  CHECK(probe2->svc.ida == "app");
  CHECK(probe2->svc.node_type == "leaf");
  CHECK(probe2->svc.seed == cl.seed_for(2));
  CHECK(probe2->svc.now() == cl.world().now());
  CHECK(probe2->svc.ports().size() == 1);
  CHECK(probe2->svc.port("L_to_R", 1) == p);
  CHECK(probe2->svc.port("L_to_R", 9) == nullptr);

  CHECK_THROWS_AS(cl.container(2)->participate("app"), std::invalid_argument);
}

TEST_CASE("withdrawal stops the nodelet, leaves the configuration, and allows rejoin") {
  TopologySpec spec = star();
  ProbeRig rig;
  SimCluster cl(tight(11));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));
  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  cl.container(3)->participate("app");
  settle(cl);

  IdaContext& ctx1 = *cl.container(1)->context("app");
  ProbeStats* probe3 = rig.find(3, "app");
  REQUIRE(probe3);
  CHECK(ctx1.ports().size() == 2);

  cl.container(3)->withdraw("app");
  CHECK(probe3->stops == 1);
  CHECK(cl.container(3)->context("app")->phase() == Phase::withdrawn);

  Configuration* cfg = cl.configuration("app");
  REQUIRE(cfg);
  CHECK(cfg->members.count(3) == 0);
  CHECK(cfg->slots_used(1, "R_to_L") == 1);
  CHECK(verify(*cfg).empty());
  CHECK(ctx1.ports().size() == 1);
  CHECK(ctx1.ports()[0]->remote() == 2);
  CHECK(cl.container(2)->context("app")->phase() == Phase::running);

  CHECK_THROWS_AS(cl.container(3)->withdraw("app"), std::invalid_argument);

  IdaContext& again = cl.container(3)->participate("app");
  settle(cl);
  CHECK(again.phase() == Phase::running);
  CHECK(cfg->members.count(3) == 1);
  CHECK(ctx1.ports().size() == 2);
  CHECK(verify(*cfg).empty());
  ProbeStats* fresh = rig.find(3, "app");
  REQUIRE(fresh);
  CHECK(fresh != probe3);
  CHECK(fresh->starts == 1);
}

TEST_CASE("scripted placement applies the plan verbatim and refuses bad plans") {
  TopologySpec spec = mesh4();
  ProbeRig rig;
  SimCluster cl(tight(5));
  for (NodeId n : {1, 2, 3, 4}) cl.add_node(n);
  cl.register_everywhere(ida_ad("grid", "mesh4"), spec, rig.covering(spec));

  JoinPlan boot;
  boot.node_type = "node";
  IdaContext& ctx1 = cl.container(1)->participate("grid", boot);
  settle(cl);
  CHECK(ctx1.phase() == Phase::running);
  REQUIRE(cl.join_log().size() == 1);
  CHECK(cl.join_log()[0].commands == 0);

  JoinPlan south_of_1;
  south_of_1.node_type = "node";
  south_of_1.bindings = {{"north", 1}};
  IdaContext& ctx2 = cl.container(2)->participate("grid", south_of_1);
  settle(cl);
  CHECK(ctx2.phase() == Phase::running);
  REQUIRE(ctx2.ports().size() == 1);
  CHECK(ctx2.ports()[0]->tmpl() == "north");
  CHECK(ctx2.ports()[0]->remote() == 1);
  CHECK(ctx1.port("south", 2) != nullptr);
  REQUIRE(cl.join_log().size() == 2);
  CHECK(cl.join_log()[1].joined);
  CHECK(cl.join_log()[1].commands == 0);

  // the same cell again: the slot is taken, so the scripted join fails
  IdaContext& ctx3 = cl.container(3)->participate("grid", south_of_1);
  settle(cl);
  CHECK(ctx3.phase() == Phase::failed);
  REQUIRE(cl.join_log().size() == 3);
  CHECK_FALSE(cl.join_log()[2].joined);
  Configuration* cfg = cl.configuration("grid");
  REQUIRE(cfg);
  CHECK(cfg->members.size() == 2);
  CHECK(cfg->connections.size() == 1);
  CHECK(verify(*cfg).empty());

  // a genuine joiner routes around the occupied cell
  IdaContext& ctx4 = cl.container(4)->participate("grid");
  settle(cl);
  CHECK(ctx4.phase() == Phase::running);
  CHECK(ctx4.ports().size() >= 1);
  CHECK(cl.join_log().back().commands >= 2);
  CHECK(verify(*cfg).empty());
  CHECK(oracle::check(*cfg).empty());
}

TEST_CASE("freezing pauses ticks and sends; thaw resumes without a restart") {
  TopologySpec spec = star();
  ProbeRig rig;
  SimCluster cl(tight(13));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));
  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  cl.container(3)->participate("app");
  settle(cl);

  IdaContext& ctx2 = *cl.container(2)->context("app");
  IdaContext& ctx3 = *cl.container(3)->context("app");
  ProbeStats* probe2 = rig.find(2, "app");
  REQUIRE(probe2);
  Port* old_port = ctx2.ports()[0];

  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  cl.world().run_until(t0 + 170);
  const int before = probe2->ticks;
  CHECK(before == 3);
  CHECK(old_port->send("up"));

  cl.fail_node(1);
  CHECK(ctx2.phase() == Phase::frozen);
  CHECK(ctx3.phase() == Phase::frozen);
  Configuration* cfg = cl.configuration("app");
  REQUIRE(cfg);
  CHECK(cfg->frozen == std::set<NodeId>{2, 3});

  cl.world().run_until(t0 + 400);
  CHECK(probe2->ticks == before);
  CHECK_FALSE(old_port->alive());
  CHECK_FALSE(old_port->send("down"));
  CHECK(probe2->starts == 1);
  CHECK(probe2->stops == 0);

  // a replacement hub arrives by script and re-satisfies both leaves
  Container& c9 = cl.add_node(9);
  c9.register_ida(ida_ad("app", "star"), spec, rig.covering(spec));
  JoinPlan hub;
  hub.node_type = "root";
  hub.bindings = {{"R_to_L", 2}, {"R_to_L", 3}};
  IdaContext& ctx9 = c9.participate("app", hub);
  cl.world().run_until(t0 + 600);

  CHECK(ctx9.phase() == Phase::running);
  CHECK(ctx2.phase() == Phase::running);
  CHECK(ctx3.phase() == Phase::running);
  CHECK(cfg->frozen.empty());
  CHECK(probe2->ticks > before);
  CHECK(probe2->starts == 1);
  CHECK(probe2->stops == 0);
  Port* renewed = ctx2.port("L_to_R", 9);
  REQUIRE(renewed);
  CHECK(renewed->send("up again"));
  CHECK(verify(*cfg).empty());
  CHECK(oracle::check(*cfg).empty());
  CHECK(cl.join_log().back().node == 9);
  CHECK(cl.join_log().back().commands == 0);
}

TEST_CASE("promotion swaps the nodelet, carrying state only when both hooks exist") {
  TopologySpec spec = star();
  ProbeRig keeper;  // dump/restore implemented
  keeper.stateful = true;
  ProbeRig amnesiac;  // dump returns nothing: replacement cold-starts
  auto trace_buf = std::make_shared<std::ostringstream>();

  ClusterParams params = tight(17);
  params.repair = RepairPolicy::promote;
  SimCluster cl(params);
  cl.set_trace(TraceWriter(trace_buf));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), spec, keeper.covering(spec));
  cl.register_everywhere(ida_ad("aux", "star"), spec, amnesiac.covering(spec));

  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  cl.container(3)->participate("app");
  settle(cl);
  JoinPlan boot;
  boot.node_type = "root";
  JoinPlan leafplan;
  leafplan.node_type = "leaf";
  leafplan.bindings = {{"L_to_R", 1}};
  cl.container(1)->participate("aux", boot);
  cl.container(2)->participate("aux", leafplan);
  cl.container(3)->participate("aux", leafplan);
  settle(cl);

  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  cl.world().run_until(t0 + 170);

  ProbeStats* app2 = keeper.find(2, "app");
  ProbeStats* aux2 = amnesiac.find(2, "aux");
  REQUIRE(app2);
  REQUIRE(aux2);
  const int carried = app2->counter;
  CHECK(carried > 0);

  cl.fail_node(1);

  IdaContext& app_ctx2 = *cl.container(2)->context("app");
  IdaContext& aux_ctx2 = *cl.container(2)->context("aux");
  CHECK(app_ctx2.phase() == Phase::running);
  CHECK(app_ctx2.node_type() == "root");
  CHECK(aux_ctx2.node_type() == "root");

  CHECK(app2->stops == 1);
  ProbeStats* app2_new = keeper.find(2, "app");
  REQUIRE(app2_new);
  CHECK(app2_new != app2);
  CHECK(app2_new->tag == "root");
  CHECK(app2_new->restore_hit);
  CHECK(app2_new->restored_from == "c=" + std::to_string(carried));
  CHECK(app2_new->counter == carried);
  CHECK(app2_new->svc.node_type == "root");

  CHECK(aux2->stops == 1);
  ProbeStats* aux2_new = amnesiac.find(2, "aux");
  REQUIRE(aux2_new);
  CHECK(aux2_new != aux2);
  CHECK_FALSE(aux2_new->restore_hit);
  CHECK(aux2_new->counter == 0);

  for (const char* ida : {"app", "aux"}) {
    Configuration* cfg = cl.configuration(ida);
    REQUIRE(cfg);
    CHECK(cfg->members.at(2) == "root");
    CHECK(cfg->members.at(3) == "leaf");
    CHECK(cfg->frozen.empty());
    CHECK(verify(*cfg).empty());
    CHECK(oracle::check(*cfg).empty());
    IdaContext& ctx3 = *cl.container(3)->context(ida);
    REQUIRE(ctx3.ports().size() == 1);
    CHECK(ctx3.ports()[0]->remote() == 2);
    CHECK(ctx3.ports()[0]->remote_type() == "root");
  }

  cl.world().run_until(t0 + 400);
  CHECK(app2_new->counter > carried);
  CHECK(trace_buf->str().find("\"event\":\"promoted\"") != std::string::npos);
}

TEST_CASE("dispatch keeps each port in order and delivers exactly once") {
  TopologySpec spec = star();
  ProbeRig root_rig;
  root_rig.consume = true;
  root_rig.reply_prefix = "ack:";
  root_rig.tick_fn = [](ProbeStats& p, std::uint64_t) {
    if (p.counter != 1) return;
    for (Port* port : p.svc.ports()) port->send("hi");
  };
  ProbeRig leaf_rig;
  leaf_rig.consume = true;
  leaf_rig.tick_fn = [](ProbeStats& p, std::uint64_t) {
    if (p.counter != 1 || p.svc.self != 2) return;
    for (int i = 1; i <= 5; ++i) p.svc.ports()[0]->send("m" + std::to_string(i));
  };
  ProbeRig quiet_rig;  // default on_message: payloads wait in the port queue

  Nodeletset ns;
  ns.factories["root"] = root_rig.factory("root");
  ns.factories["leaf"] = leaf_rig.factory("leaf");

  TopologySpec spec2 = star();
  Nodeletset ns3;
  ns3.factories["root"] = root_rig.factory("root");
  ns3.factories["leaf"] = quiet_rig.factory("leaf");

  SimCluster cl(tight(23));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  for (NodeId n : {1, 2}) cl.container(n)->register_ida(ida_ad("app", "star"), spec, ns);
  cl.container(3)->register_ida(ida_ad("app", "star"), spec2, ns3);
  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  cl.container(3)->participate("app");
  settle(cl);

  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  cl.world().run_until(t0 + 300);

  ProbeStats* root = root_rig.find(1, "app");
  ProbeStats* leaf2 = leaf_rig.find(2, "app");
  REQUIRE(root);
  REQUIRE(leaf2);

  REQUIRE(root->got.size() == 5);
  for (int i = 1; i <= 5; ++i) CHECK(root->got[i - 1] == "m" + std::to_string(i));
  REQUIRE(leaf2->got.size() >= 6);  // greeting plus five receipts
  CHECK(leaf2->got[0] == "hi");
  for (int i = 1; i <= 5; ++i) CHECK(leaf2->got[i] == "ack:m" + std::to_string(i));

  // the unhandled greeting sits in node 3's port until asked for
  IdaContext& ctx3 = *cl.container(3)->context("app");
  Port* p3 = ctx3.port("L_to_R", 1);
  REQUIRE(p3);
  CHECK(p3->pending() == 1);
  CHECK(p3->try_receive() == std::string("hi"));
  CHECK(p3->pending() == 0);
  CHECK_FALSE(p3->try_receive().has_value());
  CHECK(cl.severed_deliveries() == 0);
}

TEST_CASE("a delivery for a released connection goes to the stabiliser, not a nodelet") {
  TopologySpec spec = star();
  ProbeRig rig;
  rig.tick_fn = [](ProbeStats& p, std::uint64_t) {
    if (p.counter == 1 && p.svc.self == 2) p.svc.ports()[0]->send("boo");
  };
  SimCluster cl(tight(29));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));
  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  cl.container(3)->participate("app");
  settle(cl);

  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  // queued on the first tick, flushed on the second, landing at t0+101; the
  // sender withdraws before node 1 next drains its ports at t0+150
  cl.world().schedule(t0 + 120, [&cl] { cl.container(2)->withdraw("app"); });
  cl.world().run_until(t0 + 300);

  CHECK(cl.severed_deliveries() == 1);
  ProbeStats* root = rig.find(1, "app");
  REQUIRE(root);
  CHECK(root->got.empty());
  IdaContext& ctx1 = *cl.container(1)->context("app");
  REQUIRE(ctx1.ports().size() == 1);
  CHECK(ctx1.ports()[0]->remote() == 3);
  CHECK(ctx1.ports()[0]->pending() == 0);
  CHECK(ctx1.port("R_to_L", 2) == nullptr);
}

TEST_CASE("contexts on one node are isolated per ida") {
  TopologySpec star_spec = star();
  TopologySpec mesh_spec = mesh4();
  ProbeRig rig;
  SimCluster cl(tight(31));
  for (NodeId n : {1, 2, 3}) cl.add_node(n);
  cl.register_everywhere(ida_ad("app", "star"), star_spec, rig.covering(star_spec));
  for (NodeId n : {1, 2})
    cl.container(n)->register_ida(ida_ad("grid", "mesh4"), mesh_spec, rig.covering(mesh_spec));

  cl.container(3)->participate("app");
  settle(cl);
  cl.container(1)->participate("app");
  settle(cl);
  cl.container(2)->participate("app");
  settle(cl);
  JoinPlan boot;
  boot.node_type = "node";
  cl.container(1)->participate("grid", boot);
  JoinPlan below;
  below.node_type = "node";
  below.bindings = {{"north", 1}};
  cl.container(2)->participate("grid", below);
  settle(cl);

  CHECK(cl.commands("app") != cl.commands("grid"));
  CHECK(cl.configuration("app")->members.size() == 3);
  CHECK(cl.configuration("grid")->members.size() == 2);

  IdaContext& app1 = *cl.container(1)->context("app");
  IdaContext& grid1 = *cl.container(1)->context("grid");
  Port* app_port = app1.ports()[0];
  Port* grid_port = grid1.ports()[0];

  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  cl.world().run_until(t0 + 120);
  ProbeStats* app_probe = rig.find(1, "app");
  ProbeStats* grid_probe = rig.find(1, "grid");
  REQUIRE(app_probe);
  REQUIRE(grid_probe);
  const int app_before = app_probe->ticks;
  const int grid_before = grid_probe->ticks;
  CHECK(app_before > 0);

  cl.fail_node(3);
  CHECK(app1.phase() == Phase::frozen);
  CHECK(grid1.phase() == Phase::running);
  CHECK(cl.container(2)->context("app")->phase() == Phase::frozen);
  CHECK(cl.container(2)->context("grid")->phase() == Phase::running);

  cl.world().run_until(t0 + 320);
  CHECK(app_probe->ticks == app_before);
  CHECK(grid_probe->ticks > grid_before);
  CHECK_FALSE(app_port->send("x"));
  CHECK(grid_port->send("x"));
}

TEST_CASE("an unreachable joiner retries with backoff, then can rejoin after healing") {
  TopologySpec spec = star();
  ProbeRig rig;
  ClusterParams params = tight(37);
  params.sim.partitions = {{1}, {2}};
  SimCluster cl(params);
  cl.add_node(1);
  cl.add_node(2);
  cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));

  cl.container(1)->participate("app");
  settle(cl);
  REQUIRE(cl.join_log().size() == 1);

  IdaContext& ctx2 = cl.container(2)->participate("app");
  const std::uint64_t started = cl.world().now();
  settle(cl);
  CHECK(ctx2.phase() == Phase::failed);
  REQUIRE(cl.join_log().size() == 2);
  CHECK_FALSE(cl.join_log()[1].joined);
  CHECK(cl.join_log()[1].commands == 0);
  CHECK(cl.world().now() - started >= 10000);  // many spaced attempts, not a tight loop

  cl.world().set_partitions({});
  cl.container(2)->withdraw("app");
  IdaContext& again = cl.container(2)->participate("app");
  settle(cl);
  CHECK(again.phase() == Phase::running);
  Configuration* cfg = cl.configuration("app");
  REQUIRE(cfg);
  CHECK(cfg->members.at(2) == "leaf");
  CHECK(verify(*cfg).empty());
}

TEST_CASE("per-node seeds are stable across runs and distinct across nodes") {
  SimCluster a(tight(99));
  SimCluster b(tight(99));
  SimCluster c(tight(100));
  CHECK(a.seed_for(5) == b.seed_for(5));
  CHECK(a.seed_for(1) != a.seed_for(2));
  CHECK(a.seed_for(5) != c.seed_for(5));
}

TEST_CASE("identical runs emit identical traces") {
  auto run = [](std::uint64_t seed) {
    TopologySpec spec = star();
    ProbeRig rig;
    auto buf = std::make_shared<std::ostringstream>();
    SimCluster cl(tight(seed));
    cl.set_trace(TraceWriter(buf));
    for (NodeId n : {1, 2, 3}) cl.add_node(n);
    cl.register_everywhere(ida_ad("app", "star"), spec, rig.covering(spec));
    cl.container(1)->participate("app");
    settle(cl);
    cl.container(2)->participate("app");
    settle(cl);
    cl.container(3)->participate("app");
    settle(cl);
    const std::uint64_t t0 = cl.world().now();
    cl.start_ticks();
    cl.world().run_until(t0 + 200);
    cl.fail_node(3);
    cl.world().run_until(t0 + 300);
    cl.stop_ticks();
    cl.world().run_until_idle();
    return buf->str();
  };
  const std::string first = run(41);
  const std::string second = run(41);
  CHECK_FALSE(first.empty());
  CHECK(first == second);
  CHECK(first.find("\"event\":\"join_planned\"") != std::string::npos);
  CHECK(first.find("\"event\":\"join_committed\"") != std::string::npos);
  CHECK(first.find("\"event\":\"failed\"") != std::string::npos);
}

TEST_CASE("tick cadence is steady and start_ticks is idempotent") {
  TopologySpec spec = star();
  ProbeRig rig;
  SimCluster cl(tight(43));
  cl.add_node(1);
  cl.container(1)->register_ida(ida_ad("app", "star"), spec, rig.covering(spec));
  cl.container(1)->participate("app");
  settle(cl);

  ProbeStats* probe = rig.find(1, "app");
  REQUIRE(probe);
  const std::uint64_t t0 = cl.world().now();
  cl.start_ticks();
  cl.start_ticks();
  cl.world().run_until(t0 + 210);
  CHECK(probe->ticks == 4);

  cl.stop_ticks();
  cl.world().run_until(t0 + 500);
  CHECK(probe->ticks == 4);
}
