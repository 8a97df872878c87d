#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "idaf/ids.hpp"
#include "idaf/topology.hpp"

namespace idaf {

// A realized edge.  Stored once, from the initiator's perspective; the
// reciprocal perspective is derived through the spec wiring.
struct LiveConnection {
  NodeId n1{0};
  NodeId n2{0};
  std::string tmpl;                      // template from n1's perspective
  std::string type;                      // ConnectionType name
  std::optional<std::string> direction;  // template direction from n1's perspective
};

// The live state of one IDA: members with assigned types, satisfied
// connections and per-node slot accounting.
struct Configuration {
  std::string ida;
  const TopologySpec* spec{nullptr};
  std::map<NodeId, std::string> members;
  std::vector<LiveConnection> connections;
  std::map<std::pair<NodeId, std::string>, std::uint32_t> slot_usage;
  std::set<NodeId> frozen;
  bool failed{false};

  std::uint32_t slots_used(NodeId n, const std::string& tmpl) const;
  bool slot_free(NodeId n, const std::string& tmpl) const;
  // Neighbor along a direction token, using live edges from n's perspective.
  std::optional<NodeId> neighbor(NodeId n, const std::string& direction) const;
  // Does n use tmpl on at least one live edge, seen from n's own perspective?
  bool instantiates(NodeId n, const std::string& tmpl) const;
  // Peer on the first live edge where n plays tmpl.
  std::optional<NodeId> peer_via(NodeId n, const std::string& tmpl) const;
  std::uint32_t degree(NodeId n) const;
  ConfigurationSummary summary() const;
};

using NodeParticulars = std::map<NodeId, std::map<std::string, double>>;

struct RankingPolicy {
  std::map<std::string, double> metrics;       // attribute -> weight
  std::map<std::string, double> restrictions;  // attribute -> minimum
  std::size_t shortlist{5};
};

struct Binding {
  std::string tmpl;
  NodeId peer{0};
};

struct JoinPlan {
  NodeId joiner{0};
  std::string node_type;
  std::vector<Binding> bindings;  // planning order; names unique within a plan
};

struct JoinFailure {
  std::string connection;  // first unsatisfiable required connection
  std::string reason;
};

using JoinResult = std::variant<JoinPlan, JoinFailure>;

// Read-only structural snapshot consulted by the planner.  candidates() is
// the participating-peer directory listing; the per-node accessors are the
// queries the local-knowledge property instruments.
class ConfigView {
 public:
  virtual ~ConfigView() = default;
  virtual ConfigurationSummary summary() const = 0;
  virtual bool is_member(NodeId n) const = 0;
  // Members whose type matches tmpl's far mask and whose reciprocal slot has
  // base capacity left, ascending by id.
  virtual std::vector<NodeId> candidates(const std::string& tmpl) const = 0;
  virtual std::string node_type(NodeId n) const = 0;
  virtual std::uint32_t slots_used(NodeId n, const std::string& tmpl) const = 0;
  virtual std::optional<NodeId> neighbor(NodeId n, const std::string& direction) const = 0;
};

// View backed directly by a Configuration.
class LiveView : public ConfigView {
 public:
  explicit LiveView(const Configuration& cfg) : cfg_(cfg) {}
  ConfigurationSummary summary() const override;
  bool is_member(NodeId n) const override;
  std::vector<NodeId> candidates(const std::string& tmpl) const override;
  std::string node_type(NodeId n) const override;
  std::uint32_t slots_used(NodeId n, const std::string& tmpl) const override;
  std::optional<NodeId> neighbor(NodeId n, const std::string& direction) const override;

 private:
  const Configuration& cfg_;
};

// Self-contained snapshot, buildable from a wire transfer.
class SnapshotView : public ConfigView {
 public:
  SnapshotView(const TopologySpec& spec, std::map<NodeId, std::string> members,
               std::map<std::pair<NodeId, std::string>, std::uint32_t> slots,
               std::vector<LiveConnection> edges);
  static SnapshotView of(const Configuration& cfg);
  ConfigurationSummary summary() const override;
  bool is_member(NodeId n) const override;
  std::vector<NodeId> candidates(const std::string& tmpl) const override;
  std::string node_type(NodeId n) const override;
  std::uint32_t slots_used(NodeId n, const std::string& tmpl) const override;
  std::optional<NodeId> neighbor(NodeId n, const std::string& direction) const override;

 private:
  const TopologySpec& spec_;
  std::map<NodeId, std::string> members_;
  std::map<std::pair<NodeId, std::string>, std::uint32_t> slots_;
  std::vector<LiveConnection> edges_;
};

// Bounded-lease slot locks arbitrating concurrent joins.
struct Reservation {
  NodeId peer{0};
  std::string tmpl;  // slot template at the peer
  std::uint64_t token{0};
  std::uint64_t expires{0};
};

class ReservationBook {
 public:
  // Grants iff base usage plus live reservations leave capacity.
  std::optional<Reservation> reserve(const Configuration& cfg, NodeId peer,
                                     const std::string& tmpl, std::uint64_t now,
                                     std::uint64_t lease_ms = 1000);
  void release(std::uint64_t token);
  // Consumes the token; false if missing or expired.
  bool consume(std::uint64_t token, NodeId peer, const std::string& tmpl, std::uint64_t now);
  std::uint32_t reserved(NodeId peer, const std::string& tmpl, std::uint64_t now) const;

 private:
  struct Entry {
    NodeId peer;
    std::string tmpl;
    std::uint64_t expires;
  };
  std::map<std::uint64_t, Entry> entries_;
  std::uint64_t next_token_{1};
};

Configuration bootstrap(const TopologySpec& spec, NodeId first, const std::string& ida = "");

JoinResult plan_join(NodeId joiner, const TopologySpec& spec, const ConfigView& view,
                     const NodeParticulars& particulars, const RankingPolicy& policy,
                     std::uint64_t rng_seed);
// Same, with the node type pinned instead of selected.
JoinResult plan_join_as(NodeId joiner, const std::string& node_type, const TopologySpec& spec,
                        const ConfigView& view, const NodeParticulars& particulars,
                        const RankingPolicy& policy, std::uint64_t rng_seed);

struct RolledBack {
  NodeId peer{0};
  std::string reason;
};

// Applies every binding atomically; on any refusal the configuration is
// untouched and all passed reservations are released.
std::optional<RolledBack> commit_join(const JoinPlan& plan, Configuration& cfg,
                                      ReservationBook& book,
                                      const std::vector<Reservation>& reservations,
                                      std::uint64_t now);

// Reserve-then-commit in one step, for scripted placements and tests.
std::optional<RolledBack> apply_plan(const JoinPlan& plan, Configuration& cfg,
                                     ReservationBook& book, std::uint64_t now);

void leave(NodeId node, Configuration& cfg);

enum class RepairPolicy { freeze, promote };

struct RepairReport {
  std::vector<NodeId> frozen;    // newly frozen, cascade included
  std::vector<NodeId> cascade;   // frozen only because a required peer froze
  std::vector<std::pair<NodeId, std::string>> promoted;
  bool ida_failed{false};
  bool damaged{false};  // surviving nodes lost connections
};

RepairReport handle_failure(NodeId node, Configuration& cfg, RepairPolicy policy);

// Nodes whose required connections cannot all reach a live, unfrozen peer,
// cascaded to a fixpoint.
std::set<NodeId> compute_frozen(const Configuration& cfg);

std::vector<Violation> verify(const Configuration& cfg);

struct GraphNode {
  NodeId id{0};
  std::string type;
  bool frozen{false};
};

struct GraphEdge {
  NodeId a{0};
  NodeId b{0};
  std::string tmpl;
};

struct GraphExport {
  std::string ida;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
};

GraphExport to_graph(const Configuration& cfg);
std::string to_dot(const GraphExport& graph);

}  // namespace idaf
