#include "idaf/builtin_topologies.hpp"

namespace idaf {

TopologySpec star() {
  TopologySpec s;
  s.name = "star";
  s.node_types = {"root", "leaf"};
  s.connection_types = {{"pipe", Delivery::lasting}};
  s.connections = {
      {"R_to_L", {"root"}, {"leaf"}, "pipe", std::nullopt, Multiplicity::unbounded(), false,
       std::nullopt},
      {"L_to_R", {"leaf"}, {"root"}, "pipe", std::nullopt, Multiplicity::finite(1), true,
       std::nullopt},
  };
  s.wiring = {{"R_to_L", "L_to_R"}, {"L_to_R", "R_to_L"}};
  s.selection.initial = "root";
  s.selection.join_default = "leaf";
  s.type_change = {{"leaf", "root"}, {"root", "leaf"}};
  return s;
}

TopologySpec mesh4() {
  TopologySpec s;
  s.name = "mesh4";
  s.node_types = {"node"};
  s.connection_types = {{"pipe", Delivery::lasting}};
  const NodeTypeMask any{"node"};
  for (const char* d : {"north", "south", "east", "west"})
    s.connections.push_back(
        {d, any, any, "pipe", std::string(d), Multiplicity::finite(1), false, "cont_ref"});
  s.groups = {{"cont_ref", "node", {"north", "south", "east", "west"}, true}};
  s.wiring = {{"north", "south"}, {"south", "north"}, {"east", "west"}, {"west", "east"}};
  s.selection.initial = "node";
  s.selection.join_default = "node";
  s.locator = find_locator("mesh4");
  return s;
}

TopologySpec mesh6() {
  TopologySpec s;
  s.name = "mesh6";
  s.node_types = {"node"};
  s.connection_types = {{"pipe", Delivery::lasting}};
  const NodeTypeMask any{"node"};
  for (const char* d : {"d0", "d60", "d120", "d180", "d240", "d300"})
    s.connections.push_back(
        {d, any, any, "pipe", std::string(d), Multiplicity::finite(1), false, "hex_ref"});
  s.groups = {{"hex_ref", "node", {"d0", "d60", "d120", "d180", "d240", "d300"}, true}};
  s.wiring = {{"d0", "d180"},  {"d180", "d0"},  {"d60", "d240"},
              {"d240", "d60"}, {"d120", "d300"}, {"d300", "d120"}};
  s.selection.initial = "node";
  s.selection.join_default = "node";
  s.locator = find_locator("mesh6");
  return s;
}

std::optional<Locator> find_locator(const std::string& name) {
  if (name == "mesh4") {
    Locator l;
    l.name = "mesh4";
    l.dimension = 2;
    l.directions = {{"north", {0, 1}}, {"south", {0, -1}}, {"east", {1, 0}}, {"west", {-1, 0}}};
    return l;
  }
  if (name == "mesh6") {
    // Axial hex lattice; opposite angles are negations and adjacent angles
    // differ by one lattice step.
    Locator l;
    l.name = "mesh6";
    l.dimension = 2;
    l.directions = {{"d0", {1, 0}},    {"d60", {0, 1}},   {"d120", {-1, 1}},
                    {"d180", {-1, 0}}, {"d240", {0, -1}}, {"d300", {1, -1}}};
    return l;
  }
  return std::nullopt;
}

std::optional<TopologySpec> find_builtin(const std::string& name) {
  if (name == "star") return star();
  if (name == "mesh4") return mesh4();
  if (name == "mesh6") return mesh6();
  return std::nullopt;
}

}  // namespace idaf
