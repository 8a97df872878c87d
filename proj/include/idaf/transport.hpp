#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "idaf/ids.hpp"

namespace idaf {

// A discoverable description of an IDA, topology or peer.
struct Advertisement {
  std::string kind;  // "ida" | "topology" | "peer"
  std::string name;
  std::string id;  // globally unique per run; publish dedups on it
  std::map<std::string, std::string> attributes;
  std::string spec_ref;  // topology name, set for ida and topology kinds
};

struct AdFilter {
  std::optional<std::string> kind;
  std::optional<std::string> name;
  std::optional<std::pair<std::string, std::string>> attribute;
};

inline constexpr const char* kCommsChannel = "comms";

// Channel name for traffic belonging to one connection template.
std::string port_channel(const std::string& tmpl);

// One addressed payload.  ida empty = platform control traffic.
struct Communique {
  NodeId src{0};
  NodeId dst{0};
  std::string ida;
  std::string channel;
  std::uint64_t seq{0};  // monotone per (src, dst, channel)
  std::string body;
};

enum class SendState { pending, delivered, gave_up };

struct SendStatus {
  SendState state{SendState::pending};
  std::uint32_t attempts{0};   // attempts consumed when resolved
  std::uint64_t resolved_at{0};
};
using SendHandle = std::shared_ptr<const SendStatus>;

struct SimParams {
  std::uint64_t latency_min{2};   // virtual milliseconds
  std::uint64_t latency_max{10};
  double drop_probability{0.0};
  // Islands of mutually reachable nodes; nodes in different listed sets, or
  // listed vs unlisted, cannot exchange traffic.  Empty = fully connected.
  std::vector<std::set<NodeId>> partitions;
  std::uint64_t seed{0};
  std::uint32_t attempts{3};
  std::uint64_t retry_timeout{400};
  std::size_t payload_limit{16 * 1024};
};

struct DeliveryRecord {
  std::uint64_t at{0};
  Communique msg;
};

// Key-value text codec for control payloads and the socket wire format.
// '=', ';', '\' and newline are backslash-escaped; round-trips any string.
std::string encode_kv(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> decode_kv(const std::string& text);

using MailHook = std::function<void(const Communique&)>;

// Addressed delivery with retries, per-channel queues and advertisement
// publish/discover.  Implementations: SimWorld (virtual time, deterministic)
// and SocketTransport (real sockets).
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::uint64_t now() const = 0;

  virtual void add_node(NodeId node) = 0;
  virtual void remove_node(NodeId node) = 0;
  virtual bool has_node(NodeId node) const = 0;
  // Invoked after a Communique lands in node's queue; one hook per node.
  virtual void set_mail_hook(NodeId node, MailHook hook) = 0;

  virtual void register_channel(NodeId node, const std::string& ida,
                                const std::string& channel) = 0;
  // Oversize payload throws length_error before any attempt is made.
  // nullopt attempts/timeout take the backend defaults.
  virtual SendHandle send(const Communique& msg,
                          std::optional<std::uint32_t> attempts = std::nullopt,
                          std::optional<std::uint64_t> timeout = std::nullopt) = 0;
  virtual std::uint32_t default_attempts() const = 0;
  virtual std::uint64_t default_retry_timeout() const = 0;
  // Non-blocking; FIFO per (src, channel); throws on unregistered channel.
  virtual std::optional<Communique> receive(NodeId node, const std::string& ida,
                                            const std::string& channel) = 0;
  virtual std::uint64_t next_seq(NodeId src, NodeId dst, const std::string& channel) = 0;

  virtual void publish(NodeId origin, const Advertisement& adv) = 0;
  virtual std::vector<Advertisement> discover(NodeId node, const AdFilter& filter) const = 0;

  virtual void schedule(std::uint64_t at, std::function<void()> fn) = 0;
};

// Deterministic single-owner event loop over virtual time.  Events fire in
// (time, creation id) order; equal (params, call sequence) replays exactly.
class SimWorld : public Transport {
 public:
  explicit SimWorld(SimParams params = {});

  std::uint64_t now() const override { return now_; }
  void add_node(NodeId node) override;
  void remove_node(NodeId node) override;
  bool has_node(NodeId node) const override { return nodes_.count(node) > 0; }
  void set_mail_hook(NodeId node, MailHook hook) override;
  void register_channel(NodeId node, const std::string& ida,
                        const std::string& channel) override;
  SendHandle send(const Communique& msg,
                  std::optional<std::uint32_t> attempts = std::nullopt,
                  std::optional<std::uint64_t> timeout = std::nullopt) override;
  std::uint32_t default_attempts() const override { return params_.attempts; }
  std::uint64_t default_retry_timeout() const override { return params_.retry_timeout; }
  std::optional<Communique> receive(NodeId node, const std::string& ida,
                                    const std::string& channel) override;
  std::uint64_t next_seq(NodeId src, NodeId dst, const std::string& channel) override;
  void publish(NodeId origin, const Advertisement& adv) override;
  std::vector<Advertisement> discover(NodeId node, const AdFilter& filter) const override;
  void schedule(std::uint64_t at, std::function<void()> fn) override;

  // Drains events up to and including `until`; the clock ends at `until`.
  // Returns the deliveries made during this call.
  std::vector<DeliveryRecord> run_until(std::uint64_t until);
  // Drains events while any remain at or before `limit`; the clock ends at
  // the last event processed.
  void run_until_idle(std::uint64_t limit = UINT64_MAX);
  bool step();  // one event; false when none pending

  void set_partitions(std::vector<std::set<NodeId>> partitions);
  // Fixed extra delay added to every delivery touching this node.
  void set_extra_latency(NodeId node, std::uint64_t ms);

  const SimParams& params() const { return params_; }
  const std::vector<DeliveryRecord>& delivered_log() const { return delivered_log_; }
  std::uint64_t sends() const { return sends_; }
  std::uint64_t deliveries() const { return deliveries_; }

 private:
  struct Event {
    std::uint64_t at;
    std::uint64_t id;
    std::function<void()> fn;
  };
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
      if (a.at != b.at) return a.at > b.at;
      return a.id > b.id;
    }
  };
  struct PublishedAd {
    Advertisement adv;
    NodeId origin;
    std::uint64_t at;
    std::map<NodeId, std::uint64_t> arrival;  // nodes registered at publish time
  };
  using ChannelKey = std::tuple<NodeId, std::string, std::string>;  // node, ida, channel
  using PipeKey = std::tuple<NodeId, NodeId, std::string, std::string>;
  // Arrivals wait here until every earlier send on the pipe has resolved,
  // so retries can never reorder a pipe.
  struct PipeState {
    std::map<std::uint64_t, Communique> held;
    std::set<std::uint64_t> inflight;
  };

  bool reachable(NodeId a, NodeId b) const;
  std::uint64_t draw_latency(NodeId src, NodeId dst);
  void attempt(std::shared_ptr<SendStatus> st, const Communique& msg, std::uint32_t k,
               std::uint32_t max_attempts, std::uint64_t timeout, std::uint64_t t0);
  void deliver(std::shared_ptr<SendStatus> st, const Communique& msg, std::uint32_t k);
  void drain_pipe(const PipeKey& key);

  SimParams params_;
  std::uint64_t now_{0};
  std::uint64_t next_event_id_{0};
  std::priority_queue<Event, std::vector<Event>, EventOrder> events_;
  std::mt19937_64 rng_;

  std::set<NodeId> nodes_;
  std::map<NodeId, MailHook> hooks_;
  std::map<NodeId, std::uint64_t> extra_latency_;
  std::set<ChannelKey> channels_;
  std::map<ChannelKey, std::deque<Communique>> queues_;
  // Latest scheduled delivery per (src, dst, ida, channel); later sends on
  // the same pipe never land earlier.
  std::map<PipeKey, std::uint64_t> pipe_clock_;
  std::map<PipeKey, PipeState> pipes_;
  std::map<NodeId, std::set<std::tuple<NodeId, std::string, std::string, std::uint64_t>>> seen_;
  std::map<std::tuple<NodeId, NodeId, std::string>, std::uint64_t> seq_;
  std::vector<PublishedAd> ads_;
  std::set<std::string> ad_ids_;
  std::vector<DeliveryRecord> delivered_log_;
  std::uint64_t sends_{0};
  std::uint64_t deliveries_{0};
};

// ---------------------------------------------------------------- commands

// One request/response exchange, possibly forwarded along a chain before the
// reply comes back directly to the origin.
struct Ticket {
  std::string id;
  enum class State { pending, answered, failed };
  State state{State::pending};
  std::map<std::string, std::string> reply;  // set when answered
  std::string reason;                        // set when failed
  // Invoked exactly once, inside the event that resolves the ticket.
  std::function<void()> on_complete;
};
using TicketHandle = std::shared_ptr<Ticket>;

struct CommandRequest {
  std::string command;
  std::map<std::string, std::string> args;
  NodeId origin{0};
  NodeId received_by{0};
  std::string ticket;
};

struct Reply {
  std::map<std::string, std::string> values;
  bool ok{true};
  std::string reason;
};

struct Forward {
  NodeId next{0};
  std::optional<std::map<std::string, std::string>> args;  // replaces request args if set
};

using CommandOutcome = std::variant<Reply, Forward>;
using CommandHandlerFn = std::function<CommandOutcome(const CommandRequest&)>;

// Question/answer sessions over a comms channel.  Argument and reply keys
// must not start with '!'; that prefix carries the envelope fields.
// The engine must outlive every pending ticket's timeout horizon.
class CommandEngine {
 public:
  CommandEngine(Transport& net, std::string ida);

  void register_handler(NodeId node, const std::string& command, CommandHandlerFn fn);
  // Installs a mail hook that pumps this engine's comms traffic for node.
  // Owners multiplexing several consumers set their own hook instead.
  void attach(NodeId node);
  void remove_node(NodeId node);

  TicketHandle command_sequence(NodeId initiator, NodeId destination, const std::string& command,
                                const std::map<std::string, std::string>& args,
                                std::uint64_t response_timeout = 5000);

  // Dispatches queued comms traffic for node: requests through the handler
  // table, responses into their tickets.
  void pump(NodeId node);

  const std::string& ida() const { return ida_; }

 private:
  void respond(const CommandRequest& req, const Reply& reply);
  void fail_later(TicketHandle ticket, std::uint64_t at, const std::string& reason,
                  std::shared_ptr<const SendStatus> when_gave_up);

  Transport& net_;
  std::string ida_;
  std::map<NodeId, std::map<std::string, CommandHandlerFn>> handlers_;
  std::map<std::string, TicketHandle> open_;
  std::uint64_t next_ticket_{1};
};

}  // namespace idaf
