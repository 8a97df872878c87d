#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "idaf/locator.hpp"

namespace idaf {

// Delivery semantics of a connection kind.
enum class Delivery { once, intermittent, lasting };

struct ConnectionType {
  std::string name;
  Delivery delivery{Delivery::lasting};
};

// Maximum number of live uses of a connection template per node.
// Unbounded is a distinct state, never a sentinel integer.
class Multiplicity {
 public:
  static Multiplicity unbounded();
  static Multiplicity finite(std::uint32_t n);  // n >= 1

  bool is_unbounded() const { return unbounded_; }
  std::uint32_t limit() const;  // only valid when finite
  bool admits(std::uint32_t used) const { return unbounded_ || used < value_; }
  bool operator==(const Multiplicity&) const = default;

 private:
  bool unbounded_{false};
  std::uint32_t value_{1};
};

// An explicit set of node type names acceptable on one side of a connection.
using NodeTypeMask = std::set<std::string>;

// One row of the topology relation: a template for legal edges.
// t1 is the local perspective, t2 the remote one.  q bounds uses per node,
// f marks the connection required, r names the contingent group if any.
struct TopologyConnection {
  std::string name;
  NodeTypeMask t1;
  NodeTypeMask t2;
  std::string type;                     // ConnectionType name (o)
  std::optional<std::string> direction; // d, meaningful only with a locator
  Multiplicity multiplicity;            // q
  bool required{false};                 // f
  std::optional<std::string> group;     // r
};

// Connections that must be satisfied all-or-none.  Rigid groups additionally
// carry a geometric relationship between members, resolved by the locator.
struct ContingentGroup {
  std::string ref;
  std::string owner;                 // NodeType whose REQ or OPT houses the members
  std::vector<std::string> members;  // connection names, declaration order
  bool rigid{false};
};

struct ConfigurationSummary {
  std::uint32_t node_count{0};
  std::map<std::string, std::uint32_t> type_counts;
};

struct NodeTypeSelectionPolicy {
  std::string initial;       // assigned when the configuration is empty
  std::string join_default;  // assigned to subsequent joiners
  // Optional context-sensitive override consulted for non-empty configurations.
  std::function<std::string(const ConfigurationSummary&)> context_rule;
};

// The full declarative topology: node types, the connection relation,
// contingent groups, reciprocal wiring and the type selection policy.
// Immutable after construction; safe to share across readers.
struct TopologySpec {
  std::string name;
  std::vector<std::string> node_types;
  std::vector<ConnectionType> connection_types;
  std::vector<TopologyConnection> connections;  // declaration order is meaningful
  std::vector<ContingentGroup> groups;
  std::map<std::string, std::string> wiring;  // involution over connection names
  NodeTypeSelectionPolicy selection;
  std::optional<Locator> locator;
  std::map<std::string, std::string> type_change;  // current type -> promoted type

  const TopologyConnection* find_connection(const std::string& name) const;
  const ConnectionType* find_connection_type(const std::string& name) const;
  const ContingentGroup* find_group(const std::string& ref) const;
  bool has_node_type(const std::string& name) const;
};

struct Violation {
  std::string code;    // stable machine-readable phrase
  std::string detail;  // offending element
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

enum class Classification { unstructured, structured, rigidly_structured };

ValidationReport validate(const TopologySpec& spec);

// REQ / OPT: connections whose t1 mask admits t, split by the required flag.
// Declaration order preserved.  Unknown node type throws.
std::vector<const TopologyConnection*> required_connections(const TopologySpec& spec,
                                                            const std::string& t);
std::vector<const TopologyConnection*> optional_connections(const TopologySpec& spec,
                                                            const std::string& t);

// The same edge seen from the other endpoint.  Unwired connection throws.
const TopologyConnection& reciprocal(const TopologySpec& spec, const std::string& connection);

Classification classify(const TopologySpec& spec);

std::string select_node_type(const TopologySpec& spec, const ConfigurationSummary& summary);

}  // namespace idaf
