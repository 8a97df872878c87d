#include "idaf/socket_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <stdexcept>

namespace idaf {

namespace {

constexpr const char* kAdChannel = "!ads";

std::string encode_wire(const Communique& msg) {
  return encode_kv({{"s", std::to_string(msg.src)},
                    {"d", std::to_string(msg.dst)},
                    {"i", msg.ida},
                    {"c", msg.channel},
                    {"q", std::to_string(msg.seq)},
                    {"b", msg.body}});
}

std::optional<Communique> decode_wire(const std::string& text) {
  auto kv = decode_kv(text);
  if (!kv.count("s") || !kv.count("d") || !kv.count("c")) return std::nullopt;
  Communique msg;
  try {
    msg.src = std::stoull(kv["s"]);
    msg.dst = std::stoull(kv["d"]);
    msg.seq = kv.count("q") ? std::stoull(kv["q"]) : 0;
  } catch (const std::exception&) {
    return std::nullopt;
  }
  msg.ida = kv.count("i") ? kv["i"] : "";
  msg.channel = kv["c"];
  msg.body = kv.count("b") ? kv["b"] : "";
  return msg;
}

bool write_all(int fd, const char* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

bool read_all(int fd, char* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::recv(fd, data, len, 0);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

SocketTransport::SocketTransport(SocketParams params)
    : params_(std::move(params)), start_(std::chrono::steady_clock::now()) {
  local_nodes_.insert(params_.self);
  for (const auto& p : params_.seeds) peers_[p.node] = p;

  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(params_.listen_port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("bind failed on port " + std::to_string(params_.listen_port));
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    throw std::runtime_error("listen failed");
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);

  acceptor_ = std::thread([this] { accept_loop(); });
  timer_thread_ = std::thread([this] { timer_loop(); });
}

SocketTransport::~SocketTransport() { stop(); }

void SocketTransport::stop() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [node, fd] : conns_) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
    }
    conns_.clear();
  }
  timer_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (timer_thread_.joinable()) timer_thread_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard<std::mutex> lock(readers_mu_);
    for (int fd : reader_fds_) ::shutdown(fd, SHUT_RDWR);
    readers.swap(readers_);
  }
  for (auto& t : readers)
    if (t.joinable()) t.join();
}

std::uint64_t SocketTransport::now() const {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - start_)
                                        .count());
}

void SocketTransport::add_node(NodeId node) {
  std::lock_guard<std::mutex> lock(mu_);
  local_nodes_.insert(node);
  channels_.insert({node, "", kCommsChannel});
}

void SocketTransport::remove_node(NodeId node) {
  std::lock_guard<std::mutex> lock(mu_);
  local_nodes_.erase(node);
  peers_.erase(node);
  auto it = conns_.find(node);
  if (it != conns_.end()) {
    ::shutdown(it->second, SHUT_RDWR);
    ::close(it->second);
    conns_.erase(it);
  }
}

bool SocketTransport::has_node(NodeId node) const {
  std::lock_guard<std::mutex> lock(mu_);
  return local_nodes_.count(node) > 0 || peers_.count(node) > 0;
}

void SocketTransport::set_mail_hook(NodeId node, MailHook hook) {
  std::lock_guard<std::mutex> lock(mu_);
  hooks_[node] = std::move(hook);
}

void SocketTransport::register_channel(NodeId node, const std::string& ida,
                                       const std::string& channel) {
  std::lock_guard<std::mutex> lock(mu_);
  channels_.insert({node, ida, channel});
}

void SocketTransport::add_peer(NodeId node, const std::string& host, std::uint16_t port) {
  std::lock_guard<std::mutex> lock(mu_);
  peers_[node] = SocketPeer{node, host, port};
}

bool SocketTransport::write_frame(NodeId dst, const std::string& frame) {
  SocketPeer peer;
  int fd = -1;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_) return false;
    auto conn = conns_.find(dst);
    if (conn != conns_.end()) fd = conn->second;
    auto it = peers_.find(dst);
    if (fd < 0 && it == peers_.end()) return false;
    if (it != peers_.end()) peer = it->second;
  }

  if (fd < 0) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return false;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(peer.port);
    if (::inet_pton(AF_INET, peer.host == "localhost" ? "127.0.0.1" : peer.host.c_str(),
                    &addr.sin_addr) != 1 ||
        ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      ::close(fd);
      return false;
    }
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = conns_.emplace(dst, fd);
    if (!inserted) {
      ::close(fd);
      fd = it->second;
    }
  }

  char header[4];
  const std::uint32_t len = static_cast<std::uint32_t>(frame.size());
  header[0] = static_cast<char>((len >> 24) & 0xFF);
  header[1] = static_cast<char>((len >> 16) & 0xFF);
  header[2] = static_cast<char>((len >> 8) & 0xFF);
  header[3] = static_cast<char>(len & 0xFF);
  if (write_all(fd, header, 4) && write_all(fd, frame.data(), frame.size())) return true;

  std::lock_guard<std::mutex> lock(mu_);
  auto it = conns_.find(dst);
  if (it != conns_.end() && it->second == fd) {
    ::close(fd);
    conns_.erase(it);
  }
  return false;
}

void SocketTransport::try_send(std::shared_ptr<SendStatus> st, Communique msg, std::uint32_t k,
                               std::uint32_t max_attempts, std::uint64_t timeout) {
  if (st->state != SendState::pending) return;
  if (k > max_attempts) {
    st->state = SendState::gave_up;
    st->attempts = max_attempts;
    st->resolved_at = now();
    return;
  }
  if (write_frame(msg.dst, encode_wire(msg))) {
    st->state = SendState::delivered;  // accepted by a reliable stream
    st->attempts = k;
    st->resolved_at = now();
    return;
  }
  schedule(now() + timeout,
           [this, st, msg, k, max_attempts, timeout] { try_send(st, msg, k + 1, max_attempts, timeout); });
}

SendHandle SocketTransport::send(const Communique& msg, std::optional<std::uint32_t> attempts,
                                 std::optional<std::uint64_t> timeout) {
  if (msg.body.size() > params_.payload_limit)
    throw std::length_error("payload exceeds limit: " + std::to_string(msg.body.size()));
  auto st = std::make_shared<SendStatus>();
  bool local = false;
  {
    std::lock_guard<std::mutex> lock(mu_);
    local = local_nodes_.count(msg.dst) > 0;
  }
  if (local) {
    // local short circuit, still through the dedup/queue path
    handle_frame(encode_wire(msg));
    st->state = SendState::delivered;
    st->attempts = 1;
    st->resolved_at = now();
    return st;
  }
  try_send(st, msg, 1, attempts.value_or(params_.attempts), timeout.value_or(params_.retry_timeout));
  return st;
}

std::optional<Communique> SocketTransport::receive(NodeId node, const std::string& ida,
                                                   const std::string& channel) {
  std::lock_guard<std::mutex> lock(mu_);
  ChannelKey key{node, ida, channel};
  if (!channels_.count(key)) throw std::invalid_argument("unregistered channel: " + channel);
  auto it = queues_.find(key);
  if (it == queues_.end() || it->second.empty()) return std::nullopt;
  Communique msg = std::move(it->second.front());
  it->second.pop_front();
  return msg;
}

std::uint64_t SocketTransport::next_seq(NodeId src, NodeId dst, const std::string& channel) {
  std::lock_guard<std::mutex> lock(mu_);
  return ++seq_[{src, dst, channel}];
}

void SocketTransport::publish(NodeId origin, const Advertisement& adv) {
  std::vector<NodeId> targets;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!ad_ids_.insert(adv.id).second) return;
    ads_.push_back(adv);
    for (const auto& [node, peer] : peers_) targets.push_back(node);
  }
  std::map<std::string, std::string> kv{{"kind", adv.kind},
                                        {"name", adv.name},
                                        {"id", adv.id},
                                        {"spec_ref", adv.spec_ref}};
  for (const auto& [k, v] : adv.attributes) kv["a." + k] = v;
  Communique msg;
  msg.src = origin;
  msg.ida = "";
  msg.channel = kAdChannel;
  msg.body = encode_kv(kv);
  for (NodeId t : targets) {
    msg.dst = t;
    msg.seq = next_seq(origin, t, kAdChannel);
    write_frame(t, encode_wire(msg));
  }
}

std::vector<Advertisement> SocketTransport::discover(NodeId, const AdFilter& filter) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Advertisement> out;
  for (const auto& ad : ads_) {
    if (filter.kind && ad.kind != *filter.kind) continue;
    if (filter.name && ad.name != *filter.name) continue;
    if (filter.attribute) {
      auto it = ad.attributes.find(filter.attribute->first);
      if (it == ad.attributes.end() || it->second != filter.attribute->second) continue;
    }
    out.push_back(ad);
  }
  return out;
}

void SocketTransport::schedule(std::uint64_t at, std::function<void()> fn) {
  {
    std::lock_guard<std::mutex> lock(timer_mu_);
    timers_.push(TimerEvent{at, next_timer_id_++, std::move(fn)});
  }
  timer_cv_.notify_all();
}

void SocketTransport::timer_loop() {
  std::unique_lock<std::mutex> lock(timer_mu_);
  for (;;) {
    {
      std::lock_guard<std::mutex> check(mu_);
      if (stopping_) return;
    }
    if (timers_.empty()) {
      timer_cv_.wait_for(lock, std::chrono::milliseconds(50));
      continue;
    }
    const std::uint64_t due = timers_.top().at;
    const std::uint64_t current = now();
    if (due > current) {
      timer_cv_.wait_for(lock, std::chrono::milliseconds(due - current));
      continue;
    }
    TimerEvent ev = std::move(const_cast<TimerEvent&>(timers_.top()));
    timers_.pop();
    lock.unlock();
    ev.fn();
    lock.lock();
  }
}

void SocketTransport::handle_frame(const std::string& frame) {
  auto msg = decode_wire(frame);
  if (!msg) return;

  if (msg->channel == kAdChannel) {
    auto kv = decode_kv(msg->body);
    Advertisement ad;
    ad.kind = kv.count("kind") ? kv["kind"] : "";
    ad.name = kv.count("name") ? kv["name"] : "";
    ad.id = kv.count("id") ? kv["id"] : "";
    ad.spec_ref = kv.count("spec_ref") ? kv["spec_ref"] : "";
    for (const auto& [k, v] : kv)
      if (k.rfind("a.", 0) == 0) ad.attributes[k.substr(2)] = v;
    std::lock_guard<std::mutex> lock(mu_);
    if (!ad.id.empty() && ad_ids_.insert(ad.id).second) ads_.push_back(ad);
    return;
  }

  MailHook hook;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!local_nodes_.count(msg->dst)) return;
    if (!seen_[msg->dst].insert({msg->src, msg->ida, msg->channel, msg->seq}).second) return;
    queues_[{msg->dst, msg->ida, msg->channel}].push_back(*msg);
    auto h = hooks_.find(msg->dst);
    if (h != hooks_.end()) hook = h->second;
  }
  if (hook) hook(*msg);
}

void SocketTransport::reader_loop(int fd) {
  for (;;) {
    char header[4];
    if (!read_all(fd, header, 4)) break;
    const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(header[0])) << 24) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(header[1])) << 16) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(header[2])) << 8) |
                              static_cast<std::uint32_t>(static_cast<unsigned char>(header[3]));
    if (len > params_.payload_limit + 4096) break;  // corrupt stream
    std::string frame(len, '\0');
    if (!read_all(fd, frame.data(), len)) break;
    handle_frame(frame);
  }
  ::close(fd);
  std::lock_guard<std::mutex> lock(readers_mu_);
  reader_fds_.erase(fd);
}

void SocketTransport::accept_loop() {
  for (;;) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    if (fd < 0) return;  // listener closed
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (stopping_) {
        ::close(fd);
        return;
      }
    }
    std::lock_guard<std::mutex> lock(readers_mu_);
    reader_fds_.insert(fd);
    readers_.emplace_back([this, fd] { reader_loop(fd); });
  }
}

}  // namespace idaf
