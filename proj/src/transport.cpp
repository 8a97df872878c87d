#include "idaf/transport.hpp"

#include <algorithm>
#include <stdexcept>

namespace idaf {

std::string port_channel(const std::string& tmpl) { return "port:" + tmpl; }

// ---------------------------------------------------------------- kv codec

std::string encode_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  auto emit = [&](const std::string& s) {
    for (char c : s) {
      switch (c) {
        case '\\': out += "\\\\"; break;
        case '=': out += "\\="; break;
        case ';': out += "\\;"; break;
        case '\n': out += "\\n"; break;
        default: out += c;
      }
    }
  };
  for (const auto& [k, v] : kv) {
    emit(k);
    out += '=';
    emit(v);
    out += ';';
  }
  return out;
}

std::map<std::string, std::string> decode_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::string key, cur;
  bool in_value = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size()) {
      char n = text[++i];
      cur += n == 'n' ? '\n' : n;
      continue;
    }
    if (c == '=' && !in_value) {
      key = std::move(cur);
      cur.clear();
      in_value = true;
    } else if (c == ';' && in_value) {
      kv[key] = std::move(cur);
      cur.clear();
      in_value = false;
    } else {
      cur += c;
    }
  }
  if (in_value) kv[key] = cur;  // tolerate a missing trailing separator
  return kv;
}

// ---------------------------------------------------------------- SimWorld

SimWorld::SimWorld(SimParams params) : params_(std::move(params)), rng_(params_.seed) {
  if (params_.latency_min > params_.latency_max)
    throw std::invalid_argument("latency_min exceeds latency_max");
  if (params_.drop_probability < 0.0 || params_.drop_probability > 1.0)
    throw std::invalid_argument("drop_probability out of range");
  if (params_.attempts == 0) throw std::invalid_argument("attempts must be positive");
}

void SimWorld::add_node(NodeId node) {
  nodes_.insert(node);
  channels_.insert({node, "", kCommsChannel});
}

void SimWorld::remove_node(NodeId node) {
  nodes_.erase(node);
  hooks_.erase(node);
  extra_latency_.erase(node);
  for (auto it = channels_.begin(); it != channels_.end();)
    it = std::get<0>(*it) == node ? channels_.erase(it) : std::next(it);
  for (auto it = queues_.begin(); it != queues_.end();)
    it = std::get<0>(it->first) == node ? queues_.erase(it) : std::next(it);
}

void SimWorld::set_mail_hook(NodeId node, MailHook hook) { hooks_[node] = std::move(hook); }

void SimWorld::register_channel(NodeId node, const std::string& ida, const std::string& channel) {
  channels_.insert({node, ida, channel});
}

bool SimWorld::reachable(NodeId a, NodeId b) const {
  auto island = [&](NodeId n) {
    for (std::size_t i = 0; i < params_.partitions.size(); ++i)
      if (params_.partitions[i].count(n)) return i;
    return params_.partitions.size();  // unlisted nodes share one island
  };
  return island(a) == island(b);
}

std::uint64_t SimWorld::draw_latency(NodeId src, NodeId dst) {
  std::uniform_int_distribution<std::uint64_t> dist(params_.latency_min, params_.latency_max);
  std::uint64_t lat = dist(rng_);
  auto extra = [&](NodeId n) {
    auto it = extra_latency_.find(n);
    return it == extra_latency_.end() ? 0 : it->second;
  };
  return lat + extra(src) + extra(dst);
}

SendHandle SimWorld::send(const Communique& msg, std::optional<std::uint32_t> attempts,
                          std::optional<std::uint64_t> timeout) {
  if (msg.body.size() > params_.payload_limit)
    throw std::length_error("payload exceeds limit: " + std::to_string(msg.body.size()));
  auto st = std::make_shared<SendStatus>();
  ++sends_;
  pipes_[{msg.src, msg.dst, msg.ida, msg.channel}].inflight.insert(msg.seq);
  const std::uint32_t max_attempts = attempts.value_or(params_.attempts);
  const std::uint64_t retry = timeout.value_or(params_.retry_timeout);
  const std::uint64_t t0 = now_;
  schedule(t0, [this, st, msg, max_attempts, retry, t0] {
    attempt(st, msg, 1, max_attempts, retry, t0);
  });
  return st;
}

void SimWorld::attempt(std::shared_ptr<SendStatus> st, const Communique& msg, std::uint32_t k,
                       std::uint32_t max_attempts, std::uint64_t timeout, std::uint64_t t0) {
  if (st->state != SendState::pending) return;
  if (k > max_attempts) {
    st->state = SendState::gave_up;
    st->attempts = max_attempts;
    st->resolved_at = now_;
    const PipeKey key{msg.src, msg.dst, msg.ida, msg.channel};
    pipes_[key].inflight.erase(msg.seq);
    drain_pipe(key);  // an abandoned message no longer blocks the pipe
    return;
  }
  schedule(t0 + static_cast<std::uint64_t>(k) * timeout, [this, st, msg, k, max_attempts, timeout, t0] {
    attempt(st, msg, k + 1, max_attempts, timeout, t0);
  });
  if (!nodes_.count(msg.dst) || !reachable(msg.src, msg.dst)) return;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng_) < params_.drop_probability) return;
  const std::uint64_t lat = draw_latency(msg.src, msg.dst);
  auto& pipe = pipe_clock_[{msg.src, msg.dst, msg.ida, msg.channel}];
  const std::uint64_t when = std::max(now_ + lat, pipe);
  pipe = when;
  schedule(when, [this, st, msg, k] { deliver(st, msg, k); });
}

void SimWorld::deliver(std::shared_ptr<SendStatus> st, const Communique& msg, std::uint32_t k) {
  if (!nodes_.count(msg.dst) || !reachable(msg.src, msg.dst)) return;
  const PipeKey key{msg.src, msg.dst, msg.ida, msg.channel};
  if (st->state == SendState::pending) {
    st->state = SendState::delivered;
    st->attempts = k;
    st->resolved_at = now_;
    pipes_[key].inflight.erase(msg.seq);
  }
  if (!seen_[msg.dst].insert({msg.src, msg.ida, msg.channel, msg.seq}).second) return;
  pipes_[key].held.emplace(msg.seq, msg);
  drain_pipe(key);
}

void SimWorld::drain_pipe(const PipeKey& key) {
  auto it = pipes_.find(key);
  if (it == pipes_.end()) return;
  PipeState& pipe = it->second;
  while (!pipe.held.empty() &&
         (pipe.inflight.empty() || pipe.held.begin()->first <= *pipe.inflight.begin())) {
    Communique msg = std::move(pipe.held.begin()->second);
    pipe.held.erase(pipe.held.begin());
    if (!nodes_.count(msg.dst)) continue;
    queues_[{msg.dst, msg.ida, msg.channel}].push_back(msg);
    ++deliveries_;
    delivered_log_.push_back({now_, msg});
    auto h = hooks_.find(msg.dst);
    if (h != hooks_.end() && h->second) h->second(msg);
  }
}

std::optional<Communique> SimWorld::receive(NodeId node, const std::string& ida,
                                            const std::string& channel) {
  ChannelKey key{node, ida, channel};
  if (!channels_.count(key)) throw std::invalid_argument("unregistered channel: " + channel);
  auto it = queues_.find(key);
  if (it == queues_.end() || it->second.empty()) return std::nullopt;
  Communique msg = std::move(it->second.front());
  it->second.pop_front();
  return msg;
}

std::uint64_t SimWorld::next_seq(NodeId src, NodeId dst, const std::string& channel) {
  return ++seq_[{src, dst, channel}];
}

void SimWorld::publish(NodeId origin, const Advertisement& adv) {
  if (!ad_ids_.insert(adv.id).second) return;  // idempotent by id
  PublishedAd rec{adv, origin, now_, {}};
  for (NodeId n : nodes_) {
    if (n == origin) continue;
    rec.arrival[n] = now_ + draw_latency(origin, n);
  }
  ads_.push_back(std::move(rec));
}

std::vector<Advertisement> SimWorld::discover(NodeId node, const AdFilter& filter) const {
  std::vector<Advertisement> out;
  auto extra = [&](NodeId n) {
    auto it = extra_latency_.find(n);
    return it == extra_latency_.end() ? 0 : it->second;
  };
  for (const auto& rec : ads_) {
    if (node != rec.origin) {
      if (!reachable(rec.origin, node)) continue;
      auto a = rec.arrival.find(node);
      const std::uint64_t visible_at =
          a != rec.arrival.end() ? a->second : rec.at + params_.latency_max + extra(node);
      if (now_ < visible_at) continue;
    }
    const Advertisement& ad = rec.adv;
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

void SimWorld::schedule(std::uint64_t at, std::function<void()> fn) {
  events_.push(Event{std::max(at, now_), next_event_id_++, std::move(fn)});
}

std::vector<DeliveryRecord> SimWorld::run_until(std::uint64_t until) {
  const std::size_t mark = delivered_log_.size();
  while (!events_.empty() && events_.top().at <= until) {
    Event e = events_.top();
    events_.pop();
    now_ = e.at;
    e.fn();
  }
  now_ = std::max(now_, until);
  return {delivered_log_.begin() + static_cast<std::ptrdiff_t>(mark), delivered_log_.end()};
}

void SimWorld::run_until_idle(std::uint64_t limit) {
  while (!events_.empty() && events_.top().at <= limit) {
    Event e = events_.top();
    events_.pop();
    now_ = e.at;
    e.fn();
  }
}

bool SimWorld::step() {
  if (events_.empty()) return false;
  Event e = events_.top();
  events_.pop();
  now_ = e.at;
  e.fn();
  return true;
}

void SimWorld::set_partitions(std::vector<std::set<NodeId>> partitions) {
  params_.partitions = std::move(partitions);
}

void SimWorld::set_extra_latency(NodeId node, std::uint64_t ms) { extra_latency_[node] = ms; }

// ---------------------------------------------------------------- commands

namespace {

constexpr const char* kKindKey = "!k";
constexpr const char* kCmdKey = "!c";
constexpr const char* kTicketKey = "!t";
constexpr const char* kOriginKey = "!o";
constexpr const char* kStatusKey = "!s";
constexpr const char* kReasonKey = "!why";

std::map<std::string, std::string> plain_fields(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : kv)
    if (!k.empty() && k[0] != '!') out[k] = v;
  return out;
}

}  // namespace

CommandEngine::CommandEngine(Transport& net, std::string ida) : net_(net), ida_(std::move(ida)) {}

void CommandEngine::register_handler(NodeId node, const std::string& command,
                                     CommandHandlerFn fn) {
  net_.register_channel(node, ida_, kCommsChannel);
  handlers_[node][command] = std::move(fn);
}

void CommandEngine::attach(NodeId node) {
  net_.register_channel(node, ida_, kCommsChannel);
  net_.set_mail_hook(node, [this, node](const Communique& m) {
    if (m.channel == kCommsChannel && m.ida == ida_) pump(node);
  });
}

void CommandEngine::remove_node(NodeId node) { handlers_.erase(node); }

void CommandEngine::fail_later(TicketHandle ticket, std::uint64_t at, const std::string& reason,
                               std::shared_ptr<const SendStatus> when_gave_up) {
  net_.schedule(at, [this, ticket, reason, when_gave_up] {
    if (ticket->state != Ticket::State::pending) return;
    if (when_gave_up && when_gave_up->state != SendState::gave_up) return;
    ticket->state = Ticket::State::failed;
    ticket->reason = reason;
    open_.erase(ticket->id);
    if (ticket->on_complete) {
      auto done = std::move(ticket->on_complete);
      done();
    }
  });
}

TicketHandle CommandEngine::command_sequence(NodeId initiator, NodeId destination,
                                             const std::string& command,
                                             const std::map<std::string, std::string>& args,
                                             std::uint64_t response_timeout) {
  auto ticket = std::make_shared<Ticket>();
  ticket->id = node_name(initiator) + "-" + std::to_string(next_ticket_++);
  open_[ticket->id] = ticket;
  net_.register_channel(initiator, ida_, kCommsChannel);

  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : args) {
    if (!k.empty() && k[0] == '!') throw std::invalid_argument("reserved argument key: " + k);
    kv[k] = v;
  }
  kv[kKindKey] = "q";
  kv[kCmdKey] = command;
  kv[kTicketKey] = ticket->id;
  kv[kOriginKey] = std::to_string(initiator);

  Communique msg{initiator, destination, ida_, kCommsChannel,
                 net_.next_seq(initiator, destination, kCommsChannel), encode_kv(kv)};
  SendHandle sent = net_.send(msg);
  const std::uint64_t horizon =
      net_.default_attempts() * net_.default_retry_timeout() + 1;
  fail_later(ticket, net_.now() + horizon, "unreachable", sent);
  fail_later(ticket, net_.now() + response_timeout, "timeout", nullptr);
  return ticket;
}

void CommandEngine::respond(const CommandRequest& req, const Reply& reply) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : reply.values) {
    if (!k.empty() && k[0] == '!') throw std::invalid_argument("reserved reply key: " + k);
    kv[k] = v;
  }
  kv[kKindKey] = "r";
  kv[kTicketKey] = req.ticket;
  kv[kStatusKey] = reply.ok ? "ok" : "fail";
  if (!reply.ok) kv[kReasonKey] = reply.reason;
  Communique msg{req.received_by, req.origin, ida_, kCommsChannel,
                 net_.next_seq(req.received_by, req.origin, kCommsChannel), encode_kv(kv)};
  net_.send(msg);
}

void CommandEngine::pump(NodeId node) {
  while (auto msg = net_.receive(node, ida_, kCommsChannel)) {
    auto kv = decode_kv(msg->body);
    auto kind = kv.find(kKindKey);
    if (kind == kv.end()) continue;

    if (kind->second == "q") {
      CommandRequest req;
      req.command = kv.count(kCmdKey) ? kv[kCmdKey] : "";
      req.args = plain_fields(kv);
      req.origin = kv.count(kOriginKey) ? std::stoull(kv[kOriginKey]) : msg->src;
      req.received_by = node;
      req.ticket = kv.count(kTicketKey) ? kv[kTicketKey] : "";

      auto table = handlers_.find(node);
      const CommandHandlerFn* handler = nullptr;
      if (table != handlers_.end()) {
        auto h = table->second.find(req.command);
        if (h != table->second.end()) handler = &h->second;
      }
      if (!handler) {
        respond(req, Reply{{}, false, "unknown command: " + req.command});
        continue;
      }
      CommandOutcome outcome = (*handler)(req);
      if (auto* reply = std::get_if<Reply>(&outcome)) {
        respond(req, *reply);
      } else {
        const Forward& fwd = std::get<Forward>(outcome);
        std::map<std::string, std::string> fkv;
        for (const auto& [k, v] : fwd.args ? *fwd.args : req.args) fkv[k] = v;
        fkv[kKindKey] = "q";
        fkv[kCmdKey] = req.command;
        fkv[kTicketKey] = req.ticket;
        fkv[kOriginKey] = std::to_string(req.origin);
        Communique out{node, fwd.next, ida_, kCommsChannel,
                       net_.next_seq(node, fwd.next, kCommsChannel), encode_kv(fkv)};
        SendHandle sent = net_.send(out);
        CommandRequest back = req;
        const std::uint64_t horizon =
            net_.default_attempts() * net_.default_retry_timeout() + 1;
        net_.schedule(net_.now() + horizon, [this, back, sent] {
          if (sent->state == SendState::gave_up) respond(back, Reply{{}, false, "unreachable"});
        });
      }
      continue;
    }

    if (kind->second == "r") {
      auto it = open_.find(kv.count(kTicketKey) ? kv[kTicketKey] : "");
      if (it == open_.end()) continue;  // late or foreign response
      TicketHandle ticket = it->second;
      if (ticket->state != Ticket::State::pending) continue;
      if (kv.count(kStatusKey) && kv[kStatusKey] == "ok") {
        ticket->state = Ticket::State::answered;
        ticket->reply = plain_fields(kv);
      } else {
        ticket->state = Ticket::State::failed;
        ticket->reason = kv.count(kReasonKey) ? kv[kReasonKey] : "failed";
      }
      open_.erase(it);
      if (ticket->on_complete) {
        auto done = std::move(ticket->on_complete);
        done();
      }
    }
  }
}

}  // namespace idaf
