#pragma once

#include <cstdint>
#include <string>

namespace idaf {

using NodeId = std::uint64_t;

// Canonical rendering of a node id in traces, graphs and logs.
std::string node_name(NodeId id);

}  // namespace idaf
