#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "idaf/configuration.hpp"
#include "idaf/topology.hpp"
#include "idaf/trace.hpp"
#include "idaf/transport.hpp"

namespace idaf {

class SimCluster;
class IdaContext;

// Bridge between a nodelet and one satisfied connection.  Sends are queued
// and flushed by dispatch; receives are per-remote FIFO.
class Port {
 public:
  NodeId remote() const { return remote_; }
  const std::string& remote_type() const { return remote_type_; }
  const std::string& tmpl() const { return tmpl_; }
  bool alive() const { return alive_; }

  // false when the node is not running or the connection is gone.
  bool send(std::string payload);
  std::optional<std::string> try_receive();
  std::size_t pending() const { return incoming_.size(); }

 private:
  friend class SimCluster;
  friend class IdaContext;
  friend class Nodelet;

  NodeId remote_{0};
  std::string remote_type_;
  std::string tmpl_;
  bool alive_{true};
  const IdaContext* owner_{nullptr};
  std::deque<std::string> incoming_;
  std::deque<std::string> outgoing_;
};

// What a nodelet may touch.  Stable for the lifetime of one instance; a
// promoted node's replacement instance receives fresh services.
struct NodeletServices {
  NodeId self{0};
  std::string ida;
  std::string node_type;
  std::uint64_t seed{0};  // stable per (run seed, node)
  std::function<std::uint64_t()> now;
  std::function<std::vector<Port*>()> ports;
  std::function<Port*(const std::string& tmpl, NodeId remote)> port;
  std::function<void(const std::string& event, const std::map<std::string, std::string>&)> log;
};

// Behavior hooks.  Hooks fire only between a successful join and withdrawal,
// never concurrently with each other.
class Nodelet {
 public:
  virtual ~Nodelet() = default;
  virtual void on_start(const NodeletServices& services) { (void)services; }
  // Default leaves the payload in the port's receive queue for try_receive.
  virtual void on_message(Port& port, const std::string& payload);
  virtual void on_tick(std::uint64_t virtual_time) { (void)virtual_time; }
  virtual void on_stop() {}
  virtual std::optional<std::string> dump_state() { return std::nullopt; }
  virtual bool restore_state(const std::string& state) {
    (void)state;
    return false;
  }
};

using NodeletFactory = std::function<std::unique_ptr<Nodelet>()>;

// NodeType name -> factory; must cover every type of its topology.
struct Nodeletset {
  std::map<std::string, NodeletFactory> factories;
};

enum class Phase { joining, running, frozen, failed, withdrawn };
const char* phase_name(Phase p);

// One node's participation in one IDA.
class IdaContext {
 public:
  NodeId node() const { return node_; }
  const std::string& ida() const { return ida_; }
  Phase phase() const { return phase_; }
  const std::string& node_type() const { return node_type_; }
  Nodelet* nodelet() { return nodelet_.get(); }
  std::vector<Port*> ports();
  Port* port(const std::string& tmpl, NodeId remote);
  // Commands issued by this context's join attempts so far.
  std::uint32_t join_commands() const { return join_commands_; }

 private:
  friend class SimCluster;
  friend class Container;

  NodeId node_{0};
  std::string ida_;
  Phase phase_{Phase::joining};
  std::string node_type_;
  std::unique_ptr<Nodelet> nodelet_;
  std::vector<std::unique_ptr<Port>> ports_;
  NodeletServices services_;
  bool started_{false};

  // join coordinator state
  std::uint32_t attempt_{0};
  std::uint32_t join_commands_{0};
  std::set<NodeId> blacklist_;
  std::shared_ptr<JoinPlan> plan_;
  std::shared_ptr<std::vector<std::optional<Reservation>>> grants_;
};

// Per-node registry and participation front-end.
class Container {
 public:
  Container(NodeId self, SimCluster& cluster) : self_(self), cluster_(&cluster) {}

  // Coverage gap throws, naming the uncovered NodeType.
  void register_ida(const Advertisement& adv, const TopologySpec& spec, Nodeletset nodelets);
  bool knows(const std::string& ida) const { return registry_.count(ida) > 0; }

  IdaContext& participate(const std::string& ida);
  // Scripted placement: the plan is applied verbatim instead of planning; a
  // refused binding fails the context.  Empty bindings on an empty IDA boot.
  IdaContext& participate(const std::string& ida, JoinPlan plan);
  void withdraw(const std::string& ida);
  IdaContext* context(const std::string& ida);

  NodeId self() const { return self_; }

 private:
  friend class SimCluster;
  struct Registered {
    Advertisement adv;
    const TopologySpec* spec;
    Nodeletset nodelets;
  };
  NodeId self_{0};
  SimCluster* cluster_{nullptr};
  std::map<std::string, Registered> registry_;
  std::map<std::string, std::unique_ptr<IdaContext>> contexts_;
};

struct ClusterParams {
  SimParams sim;
  std::uint64_t tick_ms{50};
  RankingPolicy policy;
  NodeParticulars particulars;
  RepairPolicy repair{RepairPolicy::freeze};
  std::uint64_t join_backoff{200};  // base delay before a join retry
};

struct JoinOutcome {
  NodeId node{0};
  bool joined{false};
  std::uint64_t at{0};
  std::uint32_t commands{0};
};

// Single-process harness: one SimWorld, one container per node, and per-IDA
// shared engine state (configuration, reservation book, command engine).
// All mutation happens inside simulator events, so any state observed
// between events is a consistent whole.
class SimCluster {
 public:
  explicit SimCluster(ClusterParams params = {});
  ~SimCluster();

  SimWorld& world() { return world_; }
  const ClusterParams& params() const { return params_; }

  Container& add_node(NodeId id);
  Container* container(NodeId id);
  void register_everywhere(const Advertisement& adv, const TopologySpec& spec,
                           const Nodeletset& nodelets);

  // Abrupt death: transport node removed, contexts failed, each joined IDA
  // repaired under the configured policy.
  void fail_node(NodeId id);

  Configuration* configuration(const std::string& ida);
  ReservationBook* reservations(const std::string& ida);
  CommandEngine* commands(const std::string& ida);

  void set_trace(TraceWriter trace) { trace_ = std::move(trace); }
  TraceWriter& trace() { return trace_; }

  // Starts the dispatch cadence. Idempotent.  While ticking, the event queue
  // never drains; advance with run_until, not run_until_idle.
  void start_ticks();
  void stop_ticks() { ticking_ = false; }

  const std::vector<JoinOutcome>& join_log() const { return join_log_; }
  std::uint64_t severed_deliveries() const { return severed_; }

  std::uint64_t seed_for(NodeId node) const;

 private:
  friend class Container;

  struct IdaState {
    const TopologySpec* spec{nullptr};
    std::optional<Configuration> cfg;
    ReservationBook book;
    std::unique_ptr<CommandEngine> engine;
  };

  IdaState& ida_state(const std::string& ida, const TopologySpec& spec);
  void start_join(IdaContext& ctx);
  void scripted_join(IdaContext& ctx, JoinPlan plan);
  void plan_and_reserve(IdaContext& ctx, SnapshotView view);
  void finish_commit(IdaContext& ctx);
  void retry_join(IdaContext& ctx, const std::string& why);
  void become_member(IdaContext& ctx);
  void install_member_handlers(IdaContext& ctx);
  void publish_member_ad(IdaContext& ctx);
  void sync_ida(const std::string& ida);
  void rebuild_ports(IdaContext& ctx);
  void dispatch(IdaContext& ctx);
  void swap_nodelet(IdaContext& ctx, const std::string& new_type);
  void record(const std::string& ida, const std::string& event, NodeId node,
              std::map<std::string, std::string> details = {});

  ClusterParams params_;
  SimWorld world_;
  std::map<NodeId, std::unique_ptr<Container>> containers_;
  std::map<std::string, IdaState> idas_;
  TraceWriter trace_;
  bool ticking_{false};
  std::vector<JoinOutcome> join_log_;
  std::uint64_t severed_{0};
};

}  // namespace idaf
