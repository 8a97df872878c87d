#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "idaf/ids.hpp"

namespace idaf {

struct TopologySpec;

// Relative position, integer per axis.  Coordinates are additive and only
// meaningful relative to a particular origin node.
using Coordinates = std::vector<std::int64_t>;

Coordinates add(const Coordinates& a, const Coordinates& b);
Coordinates negate(const Coordinates& a);

// Locates a destination from an origin: a relative offset plus the
// connection template the destination plays at the far end.
struct Address {
  Coordinates offset;
  std::string target_connection;
  bool operator==(const Address&) const = default;
};

// Gives geometric meaning to direction tokens.  Each direction is one unit
// lattice step; reciprocal directions must map to negated coordinates.
struct Locator {
  std::string name;
  std::size_t dimension{0};
  // Declaration order fixes deterministic walk enumeration.
  std::vector<std::pair<std::string, Coordinates>> directions;

  const Coordinates* step(const std::string& direction) const;
};

Address add(const Address& a, const Address& b);

// The inverse locates the origin from the destination: offset negated,
// target connection replaced by its reciprocal.
Address inverse(const TopologySpec& spec, const Address& a);

// Address, relative to the node reached through `via`, of the node that must
// satisfy `want` for a joiner.  The joiner sits at -step(d(via)) relative to
// its via-neighbor and its want-neighbor at step(d(want)) relative to itself.
Address contingent_address(const Locator& locator, const TopologySpec& spec,
                           const std::string& via, const std::string& want);

// Live-edge adjacency: (node, direction token) -> neighbor, if an edge with
// that direction exists from the node's perspective.
using NeighborFn =
    std::function<std::optional<NodeId>(NodeId, const std::string& direction)>;

// Walks live edges from origin along a minimal unit-step decomposition of
// addr.offset, trying the possible axis orders before reporting absent.
// Absent is a normal outcome: the contingent neighbor does not exist.
std::optional<NodeId> resolve(const Locator& locator, NodeId origin, const Address& addr,
                              const NeighborFn& view);

}  // namespace idaf
