#pragma once

#include <optional>
#include <string>

#include "idaf/topology.hpp"

namespace idaf {

// Star: one root, any number of leaves, each leaf pinned to the root.
TopologySpec star();

// Degree-4 planar mesh: single node type, four rigidly contingent
// directions on a 2D lattice.
TopologySpec mesh4();

// Degree-6 mesh: six rigidly contingent directions at 60 degree increments
// on an axial hex lattice.
TopologySpec mesh6();

// Locators are executable geometry and cannot live in declarative files;
// files reference them by name instead.
std::optional<Locator> find_locator(const std::string& name);

std::optional<TopologySpec> find_builtin(const std::string& name);

}  // namespace idaf
