#pragma once

#include <string>

#include "idaf/topology.hpp"

namespace idaf {

// Declarative topology file format (JSON, UTF-8).  Multiplicity is a
// positive integer or the string "inf".  Rigid topologies reference a
// named locator registered in code.  context_rule is code-only and has no
// file representation.  Malformed input throws std::runtime_error.
TopologySpec topology_from_json(const std::string& text);
TopologySpec load_topology_file(const std::string& path);
std::string topology_to_json(const TopologySpec& spec);

}  // namespace idaf
