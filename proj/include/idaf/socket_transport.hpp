#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "idaf/transport.hpp"

namespace idaf {

struct SocketPeer {
  NodeId node{0};
  std::string host;
  std::uint16_t port{0};
};

struct SocketParams {
  NodeId self{0};
  std::uint16_t listen_port{0};  // 0 = ephemeral; see listen_port()
  std::vector<SocketPeer> seeds;
  std::uint32_t attempts{3};
  std::uint64_t retry_timeout{400};  // real milliseconds here
  std::size_t payload_limit{16 * 1024};
};

// TCP backend: 4-byte big-endian length frames carrying key-value encoded
// Communiques.  Clocks are wall milliseconds, so nothing built on this
// backend is replay-deterministic; it exists for cross-process integration.
class SocketTransport : public Transport {
 public:
  explicit SocketTransport(SocketParams params);
  ~SocketTransport() override;

  std::uint64_t now() const override;
  void add_node(NodeId node) override;
  void remove_node(NodeId node) override;
  bool has_node(NodeId node) const override;
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

  // The bound port, useful when listen_port was 0.
  std::uint16_t listen_port() const { return bound_port_; }
  // Peers learned after construction (a worker announcing itself).
  void add_peer(NodeId node, const std::string& host, std::uint16_t port);
  void stop();

 private:
  struct TimerEvent {
    std::uint64_t at;
    std::uint64_t id;
    std::function<void()> fn;
    bool operator>(const TimerEvent& other) const {
      return std::tie(at, id) > std::tie(other.at, other.id);
    }
  };
  using ChannelKey = std::tuple<NodeId, std::string, std::string>;

  void accept_loop();
  void reader_loop(int fd);
  void timer_loop();
  bool write_frame(NodeId dst, const std::string& frame);
  void handle_frame(const std::string& frame);
  void try_send(std::shared_ptr<SendStatus> st, Communique msg, std::uint32_t k,
                std::uint32_t max_attempts, std::uint64_t timeout);

  SocketParams params_;
  std::uint16_t bound_port_{0};
  int listen_fd_{-1};
  std::chrono::steady_clock::time_point start_;

  mutable std::mutex mu_;
  bool stopping_{false};
  std::map<NodeId, SocketPeer> peers_;
  std::map<NodeId, int> conns_;  // outbound, connect on demand
  std::set<NodeId> local_nodes_;
  std::map<NodeId, MailHook> hooks_;
  std::set<ChannelKey> channels_;
  std::map<ChannelKey, std::deque<Communique>> queues_;
  std::map<NodeId, std::set<std::tuple<NodeId, std::string, std::string, std::uint64_t>>> seen_;
  std::map<std::tuple<NodeId, NodeId, std::string>, std::uint64_t> seq_;
  std::vector<Advertisement> ads_;
  std::set<std::string> ad_ids_;

  std::mutex timer_mu_;
  std::condition_variable timer_cv_;
  std::priority_queue<TimerEvent, std::vector<TimerEvent>, std::greater<TimerEvent>> timers_;
  std::uint64_t next_timer_id_{0};

  std::thread acceptor_;
  std::thread timer_thread_;
  std::vector<std::thread> readers_;
  std::set<int> reader_fds_;
  std::mutex readers_mu_;
};

}  // namespace idaf
