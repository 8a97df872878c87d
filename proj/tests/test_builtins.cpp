#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>
#include <variant>
#include <vector>

#include "idaf/builtin_topologies.hpp"
#include "idaf/configuration.hpp"
#include "idaf/topology.hpp"
#include "idaf/topology_io.hpp"

using namespace idaf;

namespace {

JoinPlan must_plan(NodeId joiner, const TopologySpec& spec, const Configuration& cfg) {
  auto res = plan_join(joiner, spec, LiveView(cfg), {}, {}, 0);
  REQUIRE(std::holds_alternative<JoinPlan>(res));
  return std::get<JoinPlan>(res);
}

void must_apply(const JoinPlan& plan, Configuration& cfg, ReservationBook& book) {
  auto rolled = apply_plan(plan, cfg, book, 0);
  REQUIRE_FALSE(rolled.has_value());
}

}  // namespace

TEST_CASE("star ships the tabulated relation") {
  auto s = star();
  CHECK(validate(s).ok());
  CHECK(classify(s) == Classification::unstructured);
  CHECK(s.node_types == std::vector<std::string>{"root", "leaf"});

  const auto* fan = s.find_connection("R_to_L");
  REQUIRE(fan != nullptr);
  CHECK(fan->t1 == NodeTypeMask{"root"});
  CHECK(fan->t2 == NodeTypeMask{"leaf"});
  CHECK(fan->type == "pipe");
  CHECK_FALSE(fan->direction.has_value());
  CHECK(fan->multiplicity.is_unbounded());
  CHECK_FALSE(fan->required);
  CHECK_FALSE(fan->group.has_value());

  const auto* up = s.find_connection("L_to_R");
  REQUIRE(up != nullptr);
  CHECK(up->t1 == NodeTypeMask{"leaf"});
  CHECK(up->t2 == NodeTypeMask{"root"});
  CHECK(up->multiplicity == Multiplicity::finite(1));
  CHECK(up->required);

  CHECK(s.wiring.at("R_to_L") == "L_to_R");
  CHECK(s.wiring.at("L_to_R") == "R_to_L");
  CHECK(s.selection.initial == "root");
  CHECK(s.selection.join_default == "leaf");
  CHECK_FALSE(s.locator.has_value());
  CHECK(s.groups.empty());
}

TEST_CASE("mesh4 ships four single-use grouped directions") {
  auto m = mesh4();
  CHECK(validate(m).ok());
  CHECK(classify(m) == Classification::rigidly_structured);
  CHECK(m.node_types == std::vector<std::string>{"node"});
  for (const char* dir : {"north", "south", "east", "west"}) {
    const auto* c = m.find_connection(dir);
    REQUIRE(c != nullptr);
    CHECK(c->t1 == NodeTypeMask{"node"});
    CHECK(c->t2 == NodeTypeMask{"node"});
    CHECK(c->multiplicity == Multiplicity::finite(1));
    CHECK_FALSE(c->required);
    CHECK(c->group == std::optional<std::string>("cont_ref"));
    CHECK(c->direction == std::optional<std::string>(dir));
  }
  const auto* g = m.find_group("cont_ref");
  REQUIRE(g != nullptr);
  CHECK(g->rigid);
  CHECK(g->owner == "node");
  CHECK(g->members == std::vector<std::string>{"north", "south", "east", "west"});
  CHECK(m.wiring.at("north") == "south");
  CHECK(m.wiring.at("east") == "west");
  REQUIRE(m.locator.has_value());
  CHECK(m.locator->name == "mesh4");
}

TEST_CASE("mesh6 pairs opposite angles") {
  auto m = mesh6();
  CHECK(validate(m).ok());
  CHECK(classify(m) == Classification::rigidly_structured);
  CHECK(m.connections.size() == 6);
  CHECK(reciprocal(m, "d60").name == "d240");
  CHECK(reciprocal(m, "d0").name == "d180");
  CHECK(reciprocal(m, "d120").name == "d300");
  for (const auto& c : m.connections) {
    CHECK(c.multiplicity == Multiplicity::finite(1));
    CHECK_FALSE(c.required);
    CHECK(c.group.has_value());
  }
}

TEST_CASE("builtins round-trip through their declarative form") {
  for (const auto& spec : {star(), mesh4(), mesh6()}) {
    auto back = topology_from_json(topology_to_json(spec));
    CHECK(validate(back).ok());
    CHECK(classify(back) == classify(spec));
    CHECK(back.name == spec.name);
    CHECK(back.node_types == spec.node_types);
    REQUIRE(back.connections.size() == spec.connections.size());
    for (std::size_t i = 0; i < spec.connections.size(); ++i) {
      CHECK(back.connections[i].name == spec.connections[i].name);
      CHECK(back.connections[i].t1 == spec.connections[i].t1);
      CHECK(back.connections[i].t2 == spec.connections[i].t2);
      CHECK(back.connections[i].multiplicity == spec.connections[i].multiplicity);
      CHECK(back.connections[i].required == spec.connections[i].required);
      CHECK(back.connections[i].direction == spec.connections[i].direction);
      CHECK(back.connections[i].group == spec.connections[i].group);
    }
    CHECK(back.wiring == spec.wiring);
    CHECK(back.selection.initial == spec.selection.initial);
    CHECK(back.selection.join_default == spec.selection.join_default);
    CHECK(back.locator.has_value() == spec.locator.has_value());
    if (spec.locator) CHECK(back.locator->directions == spec.locator->directions);
  }
}

TEST_CASE("a lone mesh bootstrap has no edges and verifies clean") {
  auto m = mesh6();
  auto cfg = bootstrap(m, 1, "hex");
  CHECK(cfg.members.size() == 1);
  CHECK(cfg.connections.empty());
  CHECK(verify(cfg).empty());
}

TEST_CASE("star growth: n nodes, n-1 edges, root degree n-1") {
  auto s = star();
  auto cfg = bootstrap(s, 1, "stardom");
  ReservationBook book;
  for (NodeId n = 2; n <= 9; ++n) {
    auto plan = must_plan(n, s, cfg);
    CHECK(plan.node_type == "leaf");
    REQUIRE(plan.bindings.size() == 1);
    CHECK(plan.bindings[0].tmpl == "L_to_R");
    CHECK(plan.bindings[0].peer == 1);
    must_apply(plan, cfg, book);
  }
  CHECK(cfg.members.size() == 9);
  CHECK(cfg.connections.size() == 8);
  CHECK(cfg.degree(1) == 8);
  for (NodeId n = 2; n <= 9; ++n) CHECK(cfg.degree(n) == 1);
  CHECK(verify(cfg).empty());
}

TEST_CASE("mesh4 square bias: scripted corner then a two-door join") {
  auto m = mesh4();
  auto cfg = bootstrap(m, 1, "rooms");
  ReservationBook book;

  // Second node settles below the bootstrap: first group member wins the tie.
  auto p2 = must_plan(2, m, cfg);
  REQUIRE(p2.bindings.size() == 1);
  CHECK(p2.bindings[0].tmpl == "north");
  CHECK(p2.bindings[0].peer == 1);
  must_apply(p2, cfg, book);

  // Third placement is steered to keep the square reachable.
  JoinPlan p3;
  p3.joiner = 3;
  p3.node_type = "node";
  p3.bindings = {{"east", 1}};
  must_apply(p3, cfg, book);

  // Fourth join fills the hole with both doors bound at once.
  auto p4 = must_plan(4, m, cfg);
  REQUIRE(p4.bindings.size() == 2);
  CHECK(p4.bindings[0].tmpl == "north");
  CHECK(p4.bindings[0].peer == 3);
  CHECK(p4.bindings[1].tmpl == "east");
  CHECK(p4.bindings[1].peer == 2);
  must_apply(p4, cfg, book);

  CHECK(cfg.members.size() == 4);
  CHECK(cfg.connections.size() == 4);
  for (NodeId n = 1; n <= 4; ++n) CHECK(cfg.degree(n) == 2);
  CHECK(verify(cfg).empty());

  // One direction, one live edge: no node reuses a direction token.
  for (NodeId n = 1; n <= 4; ++n) {
    std::set<std::string> dirs;
    for (const auto& e : cfg.connections) {
      if (e.n1 == n) CHECK(dirs.insert(*e.direction).second);
      if (e.n2 == n) CHECK(dirs.insert(reciprocal(m, e.tmpl).name).second);
    }
  }
}

TEST_CASE("mesh6 worked example: three neighbors bound simultaneously") {
  auto m = mesh6();
  auto cfg = bootstrap(m, 1, "hex");
  ReservationBook book;

  // n2 one step up-left of n1, n3 one step down-right: a wedge of three
  // cells around the hole at n1's d0 side.
  JoinPlan p2;
  p2.joiner = 2;
  p2.node_type = "node";
  p2.bindings = {{"d240", 1}};  // n2 sits at d60 from n1
  must_apply(p2, cfg, book);
  JoinPlan p3;
  p3.joiner = 3;
  p3.node_type = "node";
  p3.bindings = {{"d120", 1}};  // n3 sits at d300 from n1
  must_apply(p3, cfg, book);
  REQUIRE(verify(cfg).empty());

  // The joiner's 120/180/240 neighbors are n2, n1, n3; all three must bind.
  auto p4 = must_plan(4, m, cfg);
  CHECK(p4.bindings.size() == 3);
  std::map<std::string, NodeId> bound;
  for (const auto& b : p4.bindings) bound[b.tmpl] = b.peer;
  CHECK(bound.at("d120") == 2);
  CHECK(bound.at("d180") == 1);
  CHECK(bound.at("d240") == 3);
  must_apply(p4, cfg, book);
  CHECK(cfg.connections.size() == 5);
  CHECK(cfg.degree(4) == 3);
  CHECK(verify(cfg).empty());
}

TEST_CASE("mesh degrees never exceed the direction count") {
  auto m = mesh4();
  auto cfg = bootstrap(m, 1, "grid");
  ReservationBook book;
  for (NodeId n = 2; n <= 12; ++n) {
    auto plan = must_plan(n, m, cfg);
    must_apply(plan, cfg, book);
  }
  for (const auto& [n, t] : cfg.members) CHECK(cfg.degree(n) <= 4);
  CHECK(verify(cfg).empty());
}
