#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "idaf/builtin_topologies.hpp"
#include "idaf/topology.hpp"

using namespace idaf;

namespace {

std::vector<std::string> names(const std::vector<const TopologyConnection*>& cs) {
  std::vector<std::string> out;
  for (const auto* c : cs) out.push_back(c->name);
  return out;
}

bool has_code(const ValidationReport& r, const std::string& code) {
  return std::any_of(r.violations.begin(), r.violations.end(),
                     [&](const Violation& v) { return v.code == code; });
}

}  // namespace

TEST_CASE("multiplicity admits below its limit and never above") {
  auto one = Multiplicity::finite(1);
  CHECK(one.admits(0));
  CHECK_FALSE(one.admits(1));
  CHECK_FALSE(one.admits(7));
  auto three = Multiplicity::finite(3);
  CHECK(three.admits(2));
  CHECK_FALSE(three.admits(3));
  auto inf = Multiplicity::unbounded();
  CHECK(inf.admits(0));
  CHECK(inf.admits(1000000));
  CHECK(inf.is_unbounded());
  CHECK_FALSE(one.is_unbounded());
  CHECK(one.limit() == 1);
}

TEST_CASE("star validates clean") {
  CHECK(validate(star()).ok());
}

TEST_CASE("mesh4 and mesh6 validate clean") {
  CHECK(validate(mesh4()).ok());
  CHECK(validate(mesh6()).ok());
}

TEST_CASE("removing one wiring entry is a missing reciprocal") {
  auto spec = star();
  spec.wiring.erase("L_to_R");
  auto report = validate(spec);
  CHECK_FALSE(report.ok());
  std::size_t missing = 0;
  for (const auto& v : report.violations)
    if (v.code == "missing reciprocal") {
      ++missing;
      CHECK(v.detail == "L_to_R");
    }
  CHECK(missing == 1);
  // The surviving entry still points at the orphan; that half is involution.
  CHECK(has_code(report, "non-involutive wiring"));
}

TEST_CASE("a group mixing required and optional members is flagged") {
  auto spec = mesh4();
  for (auto& c : spec.connections)
    if (c.name == "north") c.required = true;
  auto report = validate(spec);
  CHECK(has_code(report, "mixed contingent group"));
}

TEST_CASE("mask naming an undeclared node type is flagged") {
  auto spec = star();
  for (auto& c : spec.connections)
    if (c.name == "R_to_L") c.t2 = {"ghost"};
  auto report = validate(spec);
  CHECK(has_code(report, "unresolved mask"));
}

TEST_CASE("every node type requiring a connection kills buildability") {
  auto spec = star();
  for (auto& c : spec.connections) c.required = true;
  auto report = validate(spec);
  CHECK(has_code(report, "no seed node type"));
}

TEST_CASE("direction tokens demand a locator") {
  auto spec = mesh4();
  spec.locator.reset();
  auto report = validate(spec);
  CHECK(has_code(report, "direction without locator"));
  CHECK(has_code(report, "rigid group without locator"));
}

TEST_CASE("rigid groups demand directions on every member") {
  auto spec = mesh4();
  for (auto& c : spec.connections)
    if (c.name == "east") c.direction.reset();
  auto report = validate(spec);
  CHECK(has_code(report, "rigid group without directions"));
}

TEST_CASE("wiring that is not an involution is flagged") {
  auto spec = mesh4();
  spec.wiring["north"] = "east";
  auto report = validate(spec);
  CHECK_FALSE(report.ok());
  CHECK((has_code(report, "non-involutive wiring") || has_code(report, "mask mismatch") ||
         has_code(report, "reciprocal direction not opposite")));
}

TEST_CASE("group and back-references must agree both ways") {
  auto spec = mesh4();
  for (auto& c : spec.connections)
    if (c.name == "west") c.group.reset();
  auto report = validate(spec);
  CHECK(has_code(report, "group back-reference mismatch"));
}

TEST_CASE("star views: leaf requires the uplink, root offers the fan-out") {
  auto spec = star();
  CHECK(names(required_connections(spec, "leaf")) == std::vector<std::string>{"L_to_R"});
  CHECK(required_connections(spec, "root").empty());
  CHECK(names(optional_connections(spec, "root")) == std::vector<std::string>{"R_to_L"});
  CHECK(optional_connections(spec, "leaf").empty());
}

TEST_CASE("mesh views: nothing required, all four directions optional") {
  auto spec = mesh4();
  CHECK(required_connections(spec, "node").empty());
  CHECK(names(optional_connections(spec, "node")) ==
        std::vector<std::string>{"north", "south", "east", "west"});
}

TEST_CASE("required and optional views partition the matching rows") {
  for (const auto& spec : {star(), mesh4(), mesh6()}) {
    for (const auto& t : spec.node_types) {
      auto req = required_connections(spec, t);
      auto opt = optional_connections(spec, t);
      std::set<std::string> seen;
      for (const auto* c : req) {
        CHECK(c->required);
        CHECK(seen.insert(c->name).second);
      }
      for (const auto* c : opt) {
        CHECK_FALSE(c->required);
        CHECK(seen.insert(c->name).second);
      }
      std::size_t matching = 0;
      for (const auto& c : spec.connections)
        if (c.t1.count(t)) ++matching;
      CHECK(req.size() + opt.size() == matching);
    }
  }
}

TEST_CASE("views reject an unknown node type") {
  auto spec = star();
  CHECK_THROWS(required_connections(spec, "widget"));
  CHECK_THROWS(optional_connections(spec, "widget"));
}

TEST_CASE("reciprocal flips perspective and is an involution") {
  auto s = star();
  CHECK(reciprocal(s, "R_to_L").name == "L_to_R");
  CHECK(reciprocal(s, "L_to_R").name == "R_to_L");
  auto m = mesh4();
  CHECK(reciprocal(m, "north").name == "south");
  CHECK(reciprocal(m, "east").name == "west");
  for (const auto& spec : {star(), mesh4(), mesh6()}) {
    for (const auto& c : spec.connections) {
      const auto& r = reciprocal(spec, c.name);
      CHECK(reciprocal(spec, r.name).name == c.name);
      CHECK(c.t1 == r.t2);
      CHECK(c.t2 == r.t1);
    }
  }
}

TEST_CASE("reciprocal of an unwired connection throws") {
  auto spec = star();
  spec.wiring.erase("R_to_L");
  spec.wiring.erase("L_to_R");
  CHECK_THROWS(reciprocal(spec, "R_to_L"));
}

TEST_CASE("classification ladder: star, grouped, rigid") {
  CHECK(classify(star()) == Classification::unstructured);
  CHECK(classify(mesh4()) == Classification::rigidly_structured);
  CHECK(classify(mesh6()) == Classification::rigidly_structured);

  // Non-rigid all-or-none pair: structured without geometry.
  TopologySpec spec;
  spec.name = "shade";
  spec.node_types = {"white", "grey", "black"};
  spec.connection_types = {{"pipe", Delivery::lasting}};
  TopologyConnection to_white{
      "to_white", {"black"}, {"white"}, "pipe", std::nullopt, Multiplicity::finite(1),
      false, std::string("pair")};
  TopologyConnection to_grey{
      "to_grey", {"black"}, {"grey"}, "pipe", std::nullopt, Multiplicity::finite(1),
      false, std::string("pair")};
  TopologyConnection from_white{
      "from_white", {"white"}, {"black"}, "pipe", std::nullopt, Multiplicity::unbounded(),
      false, std::nullopt};
  TopologyConnection from_grey{
      "from_grey", {"grey"}, {"black"}, "pipe", std::nullopt, Multiplicity::unbounded(),
      false, std::nullopt};
  spec.connections = {to_white, to_grey, from_white, from_grey};
  spec.groups = {{"pair", "black", {"to_white", "to_grey"}, false}};
  spec.wiring = {{"to_white", "from_white"},
                 {"from_white", "to_white"},
                 {"to_grey", "from_grey"},
                 {"from_grey", "to_grey"}};
  spec.selection.initial = "white";
  spec.selection.join_default = "black";
  REQUIRE(validate(spec).ok());
  CHECK(classify(spec) == Classification::structured);
}

TEST_CASE("classification is structural, not nominal") {
  auto spec = mesh4();
  spec.name = "renamed";
  for (auto& t : spec.node_types) t = "cell";
  for (auto& c : spec.connections) {
    c.t1 = {"cell"};
    c.t2 = {"cell"};
  }
  for (auto& g : spec.groups) g.owner = "cell";
  spec.selection.initial = "cell";
  spec.selection.join_default = "cell";
  CHECK(classify(spec) == Classification::rigidly_structured);
}

TEST_CASE("node type selection: first node seeds, the rest follow the default") {
  auto s = star();
  ConfigurationSummary empty;
  CHECK(select_node_type(s, empty) == "root");
  ConfigurationSummary one;
  one.node_count = 1;
  one.type_counts["root"] = 1;
  CHECK(select_node_type(s, one) == "leaf");
  auto m = mesh4();
  CHECK(select_node_type(m, empty) == "node");
  CHECK(select_node_type(m, one) == "node");
}

TEST_CASE("context rule overrides the join default on non-empty configurations") {
  auto spec = star();
  spec.selection.context_rule = [](const ConfigurationSummary& s) {
    return s.node_count >= 3 ? std::string("root") : std::string("leaf");
  };
  ConfigurationSummary empty;
  CHECK(select_node_type(spec, empty) == "root");  // initial wins when empty
  ConfigurationSummary two;
  two.node_count = 2;
  CHECK(select_node_type(spec, two) == "leaf");
  ConfigurationSummary three;
  three.node_count = 3;
  CHECK(select_node_type(spec, three) == "root");
}

TEST_CASE("the seed type never has required connections") {
  for (const auto& spec : {star(), mesh4(), mesh6()}) {
    ConfigurationSummary empty;
    const auto t = select_node_type(spec, empty);
    CHECK(required_connections(spec, t).empty());
  }
}

TEST_CASE("spec lookups find declared elements and reject strangers") {
  auto spec = star();
  REQUIRE(spec.find_connection("R_to_L") != nullptr);
  CHECK(spec.find_connection("R_to_L")->multiplicity.is_unbounded());
  REQUIRE(spec.find_connection("L_to_R") != nullptr);
  CHECK(spec.find_connection("L_to_R")->required);
  CHECK(spec.find_connection("L_to_R")->multiplicity == Multiplicity::finite(1));
  CHECK(spec.find_connection("missing") == nullptr);
  CHECK(spec.find_connection_type("pipe") != nullptr);
  CHECK(spec.find_connection_type("rope") == nullptr);
  CHECK(spec.has_node_type("root"));
  CHECK_FALSE(spec.has_node_type("branch"));
  auto m = mesh4();
  REQUIRE(m.find_group("cont_ref") != nullptr);
  CHECK(m.find_group("cont_ref")->rigid);
  CHECK(m.find_group("cont_ref")->members.size() == 4);
}
