#include "idaf/runtime.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace idaf {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string describe_bindings(const JoinPlan& plan) {
  std::string out;
  for (const auto& b : plan.bindings) {
    if (!out.empty()) out += ",";
    out += b.tmpl + "->" + node_name(b.peer);
  }
  return out;
}

constexpr std::uint32_t kMaxJoinAttempts = 60;

}  // namespace

// ---------------------------------------------------------------- ports

bool Port::send(std::string payload) {
  if (!alive_ || !owner_) return false;
  if (owner_->phase() != Phase::running) return false;
  outgoing_.push_back(std::move(payload));
  return true;
}

std::optional<std::string> Port::try_receive() {
  if (!alive_ || incoming_.empty()) return std::nullopt;
  std::string payload = std::move(incoming_.front());
  incoming_.pop_front();
  return payload;
}

void Nodelet::on_message(Port& port, const std::string& payload) {
  port.incoming_.push_back(payload);
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::joining: return "joining";
    case Phase::running: return "running";
    case Phase::frozen: return "frozen";
    case Phase::failed: return "failed";
    case Phase::withdrawn: return "withdrawn";
  }
  return "?";
}

std::vector<Port*> IdaContext::ports() {
  std::vector<Port*> out;
  for (auto& p : ports_)
    if (p->alive_) out.push_back(p.get());
  return out;
}

Port* IdaContext::port(const std::string& tmpl, NodeId remote) {
  for (auto& p : ports_)
    if (p->alive_ && p->tmpl_ == tmpl && p->remote_ == remote) return p.get();
  return nullptr;
}

// ---------------------------------------------------------------- container

void Container::register_ida(const Advertisement& adv, const TopologySpec& spec,
                             Nodeletset nodelets) {
  for (const auto& t : spec.node_types)
    if (!nodelets.factories.count(t)) throw std::invalid_argument(t + " uncovered");
  registry_[adv.name] = Registered{adv, &spec, std::move(nodelets)};
  cluster_->world().publish(self_, adv);
}

IdaContext& Container::participate(const std::string& ida) {
  auto reg = registry_.find(ida);
  if (reg == registry_.end()) throw std::invalid_argument("unregistered ida: " + ida);
  auto existing = contexts_.find(ida);
  if (existing != contexts_.end() && existing->second->phase_ != Phase::withdrawn)
    throw std::invalid_argument("already participating: " + ida);

  auto ctx = std::make_unique<IdaContext>();
  ctx->node_ = self_;
  ctx->ida_ = ida;
  IdaContext& ref = *ctx;
  contexts_[ida] = std::move(ctx);

  cluster_->ida_state(ida, *reg->second.spec);
  SimCluster* cluster = cluster_;
  NodeId node = self_;
  cluster_->world().schedule(cluster_->world().now(), [cluster, node, ida] {
    Container* c = cluster->container(node);
    IdaContext* x = c ? c->context(ida) : nullptr;
    if (x && x->phase() == Phase::joining) cluster->start_join(*x);
  });
  return ref;
}

IdaContext& Container::participate(const std::string& ida, JoinPlan plan) {
  auto reg = registry_.find(ida);
  if (reg == registry_.end()) throw std::invalid_argument("unregistered ida: " + ida);
  auto existing = contexts_.find(ida);
  if (existing != contexts_.end() && existing->second->phase_ != Phase::withdrawn)
    throw std::invalid_argument("already participating: " + ida);

  auto ctx = std::make_unique<IdaContext>();
  ctx->node_ = self_;
  ctx->ida_ = ida;
  IdaContext& ref = *ctx;
  contexts_[ida] = std::move(ctx);

  cluster_->ida_state(ida, *reg->second.spec);
  SimCluster* cluster = cluster_;
  NodeId node = self_;
  plan.joiner = self_;
  cluster_->world().schedule(cluster_->world().now(), [cluster, node, ida, plan] {
    Container* c = cluster->container(node);
    IdaContext* x = c ? c->context(ida) : nullptr;
    if (x && x->phase() == Phase::joining) cluster->scripted_join(*x, plan);
  });
  return ref;
}

void Container::withdraw(const std::string& ida) {
  auto it = contexts_.find(ida);
  if (it == contexts_.end() || it->second->phase_ == Phase::withdrawn)
    throw std::invalid_argument("unknown context: " + ida);
  IdaContext& ctx = *it->second;
  const Phase was = ctx.phase_;
  ctx.phase_ = Phase::withdrawn;
  if (was == Phase::running || was == Phase::frozen) {
    if (ctx.nodelet_) ctx.nodelet_->on_stop();
    auto* st = cluster_ ? cluster_->configuration(ida) : nullptr;
    if (st && st->members.count(self_)) {
      leave(self_, *st);
      cluster_->record(ida, "left", self_);
      cluster_->sync_ida(ida);
    }
    if (auto* eng = cluster_->commands(ida)) eng->remove_node(self_);
  }
}

IdaContext* Container::context(const std::string& ida) {
  auto it = contexts_.find(ida);
  return it == contexts_.end() ? nullptr : it->second.get();
}

// ---------------------------------------------------------------- cluster

SimCluster::SimCluster(ClusterParams params) : params_(std::move(params)), world_(params_.sim) {}

SimCluster::~SimCluster() = default;

Container& SimCluster::add_node(NodeId id) {
  auto it = containers_.find(id);
  if (it != containers_.end()) return *it->second;
  world_.add_node(id);
  auto owned = std::make_unique<Container>(id, *this);
  Container& ref = *owned;
  containers_[id] = std::move(owned);
  world_.set_mail_hook(id, [this, id](const Communique& m) {
    if (m.channel != kCommsChannel) return;  // port traffic drains on ticks
    auto s = idas_.find(m.ida);
    if (s != idas_.end() && s->second.engine) s->second.engine->pump(id);
  });
  return ref;
}

Container* SimCluster::container(NodeId id) {
  auto it = containers_.find(id);
  return it == containers_.end() ? nullptr : it->second.get();
}

void SimCluster::register_everywhere(const Advertisement& adv, const TopologySpec& spec,
                                     const Nodeletset& nodelets) {
  for (auto& [id, c] : containers_) c->register_ida(adv, spec, nodelets);
}

Configuration* SimCluster::configuration(const std::string& ida) {
  auto it = idas_.find(ida);
  if (it == idas_.end() || !it->second.cfg) return nullptr;
  return &*it->second.cfg;
}

ReservationBook* SimCluster::reservations(const std::string& ida) {
  auto it = idas_.find(ida);
  return it == idas_.end() ? nullptr : &it->second.book;
}

CommandEngine* SimCluster::commands(const std::string& ida) {
  auto it = idas_.find(ida);
  return it == idas_.end() ? nullptr : it->second.engine.get();
}

std::uint64_t SimCluster::seed_for(NodeId node) const {
  return splitmix64(params_.sim.seed ^ (node * 0x9E3779B97F4A7C15ULL));
}

SimCluster::IdaState& SimCluster::ida_state(const std::string& ida, const TopologySpec& spec) {
  auto it = idas_.find(ida);
  if (it == idas_.end()) {
    IdaState st;
    st.spec = &spec;
    st.engine = std::make_unique<CommandEngine>(world_, ida);
    it = idas_.emplace(ida, std::move(st)).first;
  }
  return it->second;
}

void SimCluster::record(const std::string& ida, const std::string& event, NodeId node,
                        std::map<std::string, std::string> details) {
  trace_.record(world_.now(), ida, event, node, details);
}

// ---------------------------------------------------------------- joining

void SimCluster::start_join(IdaContext& ctx) {
  if (ctx.phase_ != Phase::joining) return;
  IdaState& st = idas_.at(ctx.ida_);

  if (!st.cfg) {  // nothing exists yet: this node seeds the configuration
    st.cfg = bootstrap(*st.spec, ctx.node_, ctx.ida_);
    become_member(ctx);
    record(ctx.ida_, "join_committed", ctx.node_,
           {{"type", ctx.node_type_}, {"bootstrap", "1"}});
    join_log_.push_back({ctx.node_, true, world_.now(), ctx.join_commands_});
    return;
  }

  AdFilter filter;
  filter.kind = "peer";
  filter.attribute = std::make_pair(std::string("ida"), ctx.ida_);
  std::vector<NodeId> candidates;
  for (const auto& ad : world_.discover(ctx.node_, filter)) {
    auto n = ad.attributes.find("node");
    if (n == ad.attributes.end()) continue;
    NodeId peer = std::stoull(n->second);
    if (peer == ctx.node_ || ctx.blacklist_.count(peer)) continue;
    candidates.push_back(peer);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) {
    ctx.blacklist_.clear();  // retry from scratch; exclusions may be stale
    retry_join(ctx, "no reachable peers");
    return;
  }

  const NodeId rendezvous = candidates.front();
  const NodeId node = ctx.node_;
  const std::string ida = ctx.ida_;
  const std::uint32_t gen = ctx.attempt_;
  ++ctx.join_commands_;
  TicketHandle t = st.engine->command_sequence(node, rendezvous, "JOIN_PEER", {});
  t->on_complete = [this, node, ida, gen, rendezvous, t] {
    Container* c = container(node);
    IdaContext* ctx = c ? c->context(ida) : nullptr;
    if (!ctx || ctx->phase_ != Phase::joining || ctx->attempt_ != gen) return;
    if (t->state != Ticket::State::answered) {
      ctx->blacklist_.insert(rendezvous);  // dead or unwilling; try another
      retry_join(*ctx, "rendezvous " + t->reason);
      return;
    }
    IdaState& st = idas_.at(ida);
    std::map<NodeId, std::string> members;
    std::map<std::pair<NodeId, std::string>, std::uint32_t> slots;
    std::vector<LiveConnection> edges;
    auto reply = t->reply;
    for (const auto& m : split(reply["members"], ',')) {
      auto kv = split(m, ':');
      if (kv.size() == 2) members[std::stoull(kv[0])] = kv[1];
    }
    for (const auto& s : split(reply["slots"], ',')) {
      auto kv = split(s, '|');
      if (kv.size() == 3)
        slots[{std::stoull(kv[0]), kv[1]}] = static_cast<std::uint32_t>(std::stoul(kv[2]));
    }
    for (const auto& e : split(reply["edges"], ',')) {
      auto kv = split(e, '|');
      if (kv.size() != 3) continue;
      const TopologyConnection* tc = st.spec->find_connection(kv[2]);
      if (!tc) continue;
      edges.push_back(
          {std::stoull(kv[0]), std::stoull(kv[1]), kv[2], tc->type, tc->direction});
    }
    plan_and_reserve(*ctx, SnapshotView(*st.spec, std::move(members), std::move(slots),
                                        std::move(edges)));
  };
}

void SimCluster::scripted_join(IdaContext& ctx, JoinPlan plan) {
  if (ctx.phase_ != Phase::joining) return;
  IdaState& st = idas_.at(ctx.ida_);
  if (!st.cfg && plan.bindings.empty()) {
    st.cfg = bootstrap(*st.spec, ctx.node_, ctx.ida_);
    become_member(ctx);
    record(ctx.ida_, "join_committed", ctx.node_,
           {{"type", ctx.node_type_}, {"bootstrap", "1"}});
    join_log_.push_back({ctx.node_, true, world_.now(), ctx.join_commands_});
    return;
  }
  if (!st.cfg) {
    ctx.phase_ = Phase::failed;
    record(ctx.ida_, "join_failed", ctx.node_, {{"reason", "no configuration to join"}});
    join_log_.push_back({ctx.node_, false, world_.now(), ctx.join_commands_});
    return;
  }
  if (plan.node_type.empty())
    plan.node_type = select_node_type(*st.spec, SnapshotView::of(*st.cfg).summary());
  std::optional<RolledBack> rb = apply_plan(plan, *st.cfg, st.book, world_.now());
  if (rb) {
    ctx.phase_ = Phase::failed;
    record(ctx.ida_, "join_failed", ctx.node_,
           {{"connection", ""}, {"reason", rb->reason}});
    join_log_.push_back({ctx.node_, false, world_.now(), ctx.join_commands_});
    return;
  }
  become_member(ctx);
  record(ctx.ida_, "join_committed", ctx.node_,
         {{"type", ctx.node_type_}, {"bindings", describe_bindings(plan)}, {"scripted", "1"}});
  join_log_.push_back({ctx.node_, true, world_.now(), ctx.join_commands_});
  sync_ida(ctx.ida_);
}

void SimCluster::plan_and_reserve(IdaContext& ctx, SnapshotView view) {
  IdaState& st = idas_.at(ctx.ida_);
  JoinResult result = plan_join(ctx.node_, *st.spec, view, params_.particulars, params_.policy,
                                seed_for(ctx.node_));
  if (auto* failure = std::get_if<JoinFailure>(&result)) {
    ctx.phase_ = Phase::failed;
    record(ctx.ida_, "join_failed", ctx.node_,
           {{"connection", failure->connection}, {"reason", failure->reason}});
    join_log_.push_back({ctx.node_, false, world_.now(), ctx.join_commands_});
    return;
  }

  ctx.plan_ = std::make_shared<JoinPlan>(std::get<JoinPlan>(std::move(result)));
  record(ctx.ida_, "join_planned", ctx.node_,
         {{"type", ctx.plan_->node_type}, {"bindings", describe_bindings(*ctx.plan_)}});

  const std::size_t n = ctx.plan_->bindings.size();
  ctx.grants_ = std::make_shared<std::vector<std::optional<Reservation>>>(n);
  if (n == 0) {
    finish_commit(ctx);
    return;
  }

  auto remaining = std::make_shared<std::size_t>(n);
  const NodeId node = ctx.node_;
  const std::string ida = ctx.ida_;
  const std::uint32_t gen = ctx.attempt_;
  for (std::size_t i = 0; i < n; ++i) {
    const Binding& b = ctx.plan_->bindings[i];
    const std::string slot_tmpl = reciprocal(*st.spec, b.tmpl).name;
    ++ctx.join_commands_;
    TicketHandle t = st.engine->command_sequence(node, b.peer, "RESERVE", {{"tmpl", slot_tmpl}});
    const NodeId peer = b.peer;
    t->on_complete = [this, node, ida, gen, i, peer, slot_tmpl, remaining, t] {
      Container* c = container(node);
      IdaContext* ctx = c ? c->context(ida) : nullptr;
      if (!ctx || ctx->phase_ != Phase::joining || ctx->attempt_ != gen || !ctx->grants_) return;
      if (t->state == Ticket::State::answered && t->reply.count("granted") &&
          t->reply.at("granted") == "1") {
        Reservation r;
        r.peer = peer;
        r.tmpl = slot_tmpl;
        r.token = std::stoull(t->reply.at("token"));
        r.expires = std::stoull(t->reply.at("expires"));
        (*ctx->grants_)[i] = r;
      }
      if (--*remaining == 0) finish_commit(*ctx);
    };
  }
}

void SimCluster::finish_commit(IdaContext& ctx) {
  IdaState& st = idas_.at(ctx.ida_);
  std::vector<Reservation> held;
  bool all = true;
  for (const auto& g : *ctx.grants_) {
    if (g)
      held.push_back(*g);
    else
      all = false;
  }
  if (!all) {
    for (const auto& r : held) {
      ++ctx.join_commands_;
      st.engine->command_sequence(ctx.node_, r.peer, "RELEASE", {{"token", std::to_string(r.token)}});
    }
    record(ctx.ida_, "released", ctx.node_, {{"reason", "reservation refused"}});
    retry_join(ctx, "reservation refused");
    return;
  }

  // All grants in hand: apply every binding in this one event action.
  std::optional<RolledBack> rb = commit_join(*ctx.plan_, *st.cfg, st.book, held, world_.now());
  if (rb) {
    record(ctx.ida_, "released", ctx.node_,
           {{"peer", node_name(rb->peer)}, {"reason", rb->reason}});
    retry_join(ctx, rb->reason);
    return;
  }

  const JoinPlan plan = *ctx.plan_;
  ctx.plan_.reset();
  ctx.grants_.reset();
  become_member(ctx);
  record(ctx.ida_, "join_committed", ctx.node_,
         {{"type", ctx.node_type_}, {"bindings", describe_bindings(plan)}});
  join_log_.push_back({ctx.node_, true, world_.now(), ctx.join_commands_});
  for (const auto& b : plan.bindings) {
    ++ctx.join_commands_;
    st.engine->command_sequence(ctx.node_, b.peer, "COMMIT", {});
  }
  sync_ida(ctx.ida_);
}

void SimCluster::retry_join(IdaContext& ctx, const std::string& why) {
  ctx.plan_.reset();
  ctx.grants_.reset();
  ++ctx.attempt_;
  if (ctx.attempt_ > kMaxJoinAttempts) {
    ctx.phase_ = Phase::failed;
    record(ctx.ida_, "join_failed", ctx.node_, {{"reason", "retries exhausted: " + why}});
    join_log_.push_back({ctx.node_, false, world_.now(), ctx.join_commands_});
    return;
  }
  const std::uint64_t stagger = 17 * (ctx.node_ % 11);
  const std::uint64_t backoff =
      params_.join_backoff * std::min<std::uint64_t>(ctx.attempt_, 5) + stagger;
  const NodeId node = ctx.node_;
  const std::string ida = ctx.ida_;
  world_.schedule(world_.now() + backoff, [this, node, ida] {
    Container* c = container(node);
    IdaContext* x = c ? c->context(ida) : nullptr;
    if (x && x->phase() == Phase::joining) start_join(*x);
  });
}

// ---------------------------------------------------------------- membership

void SimCluster::become_member(IdaContext& ctx) {
  IdaState& st = idas_.at(ctx.ida_);
  ctx.node_type_ = st.cfg->members.at(ctx.node_);
  install_member_handlers(ctx);
  publish_member_ad(ctx);
  rebuild_ports(ctx);
  ctx.phase_ = Phase::running;

  Container* c = container(ctx.node_);
  const auto& reg = c->registry_.at(ctx.ida_);
  ctx.nodelet_ = reg.nodelets.factories.at(ctx.node_type_)();

  NodeletServices s;
  s.self = ctx.node_;
  s.ida = ctx.ida_;
  s.node_type = ctx.node_type_;
  s.seed = seed_for(ctx.node_);
  s.now = [this] { return world_.now(); };
  const NodeId node = ctx.node_;
  const std::string ida = ctx.ida_;
  s.ports = [this, node, ida]() -> std::vector<Port*> {
    Container* c = container(node);
    IdaContext* x = c ? c->context(ida) : nullptr;
    return x ? x->ports() : std::vector<Port*>{};
  };
  s.port = [this, node, ida](const std::string& tmpl, NodeId remote) -> Port* {
    Container* c = container(node);
    IdaContext* x = c ? c->context(ida) : nullptr;
    return x ? x->port(tmpl, remote) : nullptr;
  };
  s.log = [this, node, ida](const std::string& event,
                            const std::map<std::string, std::string>& details) {
    record(ida, event, node, details);
  };
  ctx.services_ = s;
  ctx.started_ = true;
  ctx.nodelet_->on_start(ctx.services_);
}

void SimCluster::install_member_handlers(IdaContext& ctx) {
  IdaState& st = idas_.at(ctx.ida_);
  const NodeId self = ctx.node_;
  const std::string ida = ctx.ida_;

  st.engine->register_handler(self, "JOIN_PEER", [this, ida](const CommandRequest&) -> CommandOutcome {
    IdaState& st = idas_.at(ida);
    if (!st.cfg) return Reply{{}, false, "no configuration"};
    std::string members, edges, slots;
    for (const auto& [n, t] : st.cfg->members) {
      if (!members.empty()) members += ",";
      members += std::to_string(n) + ":" + t;
    }
    for (const auto& e : st.cfg->connections) {
      if (!edges.empty()) edges += ",";
      edges += std::to_string(e.n1) + "|" + std::to_string(e.n2) + "|" + e.tmpl;
    }
    for (const auto& [key, used] : st.cfg->slot_usage) {
      if (!slots.empty()) slots += ",";
      slots += std::to_string(key.first) + "|" + key.second + "|" + std::to_string(used);
    }
    return Reply{{{"members", members}, {"edges", edges}, {"slots", slots}}, true, ""};
  });

  st.engine->register_handler(
      self, "DO_YOU_HAVE_A_FREE_TOPCON",
      [this, ida, self](const CommandRequest& req) -> CommandOutcome {
        IdaState& st = idas_.at(ida);
        auto tmpl = req.args.find("tmpl");
        if (!st.cfg || tmpl == req.args.end()) return Reply{{}, false, "bad request"};
        const TopologyConnection* c = st.cfg->spec->find_connection(tmpl->second);
        if (!c) return Reply{{}, false, "unknown connection: " + tmpl->second};
        const bool free = c->multiplicity.admits(st.cfg->slots_used(self, tmpl->second) +
                                                 st.book.reserved(self, tmpl->second, world_.now()));
        return Reply{{{"answer", free ? "yes" : "no"}}, true, ""};
      });

  st.engine->register_handler(
      self, "RESERVE", [this, ida, self](const CommandRequest& req) -> CommandOutcome {
        IdaState& st = idas_.at(ida);
        auto tmpl = req.args.find("tmpl");
        if (!st.cfg || tmpl == req.args.end()) return Reply{{}, false, "bad request"};
        auto r = st.book.reserve(*st.cfg, self, tmpl->second, world_.now());
        if (!r) return Reply{{{"granted", "0"}}, true, ""};
        record(ida, "reserved", self,
               {{"tmpl", tmpl->second},
                {"token", std::to_string(r->token)},
                {"for", node_name(req.origin)}});
        return Reply{{{"granted", "1"},
                      {"token", std::to_string(r->token)},
                      {"expires", std::to_string(r->expires)}},
                     true,
                     ""};
      });

  st.engine->register_handler(
      self, "RELEASE", [this, ida, self](const CommandRequest& req) -> CommandOutcome {
        IdaState& st = idas_.at(ida);
        auto token = req.args.find("token");
        if (token == req.args.end()) return Reply{{}, false, "bad request"};
        st.book.release(std::stoull(token->second));
        record(ida, "released", self, {{"token", token->second}});
        return Reply{{}, true, ""};
      });

  st.engine->register_handler(self, "COMMIT",
                              [](const CommandRequest&) -> CommandOutcome { return Reply{}; });
}

void SimCluster::publish_member_ad(IdaContext& ctx) {
  Advertisement ad;
  ad.kind = "peer";
  ad.name = node_name(ctx.node_);
  ad.id = ctx.ida_ + "/member/" + node_name(ctx.node_) + "@" + std::to_string(world_.now());
  ad.attributes = {{"ida", ctx.ida_}, {"node", std::to_string(ctx.node_)}};
  world_.publish(ctx.node_, ad);
}

// ---------------------------------------------------------------- sync

void SimCluster::rebuild_ports(IdaContext& ctx) {
  IdaState& st = idas_.at(ctx.ida_);
  const Configuration& cfg = *st.cfg;
  const NodeId self = ctx.node_;

  struct Want {
    std::string tmpl;
    NodeId remote;
  };
  std::vector<Want> wanted;
  for (const auto& e : cfg.connections) {
    if (e.n1 == self)
      wanted.push_back({e.tmpl, e.n2});
    else if (e.n2 == self)
      wanted.push_back({reciprocal(*st.spec, e.tmpl).name, e.n1});
  }

  for (auto& p : ctx.ports_) {
    if (!p->alive_) continue;
    bool still = std::any_of(wanted.begin(), wanted.end(), [&](const Want& w) {
      return w.tmpl == p->tmpl_ && w.remote == p->remote_;
    });
    if (!still) p->alive_ = false;
  }
  for (const auto& w : wanted) {
    if (ctx.port(w.tmpl, w.remote)) continue;
    auto p = std::make_unique<Port>();
    p->remote_ = w.remote;
    p->remote_type_ = cfg.members.count(w.remote) ? cfg.members.at(w.remote) : "";
    p->tmpl_ = w.tmpl;
    p->owner_ = &ctx;
    world_.register_channel(self, ctx.ida_, port_channel(w.tmpl));
    ctx.ports_.push_back(std::move(p));
  }
}

void SimCluster::sync_ida(const std::string& ida) {
  auto it = idas_.find(ida);
  if (it == idas_.end() || !it->second.cfg) return;
  const Configuration& cfg = *it->second.cfg;
  for (auto& [node, container] : containers_) {
    IdaContext* ctx = container->context(ida);
    if (!ctx) continue;
    if (ctx->phase_ != Phase::running && ctx->phase_ != Phase::frozen) continue;
    if (!cfg.members.count(node)) continue;  // removal is handled by its cause
    const std::string& type = cfg.members.at(node);
    if (type != ctx->node_type_) swap_nodelet(*ctx, type);
    rebuild_ports(*ctx);
    const bool frozen = cfg.frozen.count(node) > 0;
    if (frozen && ctx->phase_ == Phase::running) ctx->phase_ = Phase::frozen;
    if (!frozen && ctx->phase_ == Phase::frozen) ctx->phase_ = Phase::running;
  }
}

void SimCluster::swap_nodelet(IdaContext& ctx, const std::string& new_type) {
  Container* c = container(ctx.node_);
  const auto& reg = c->registry_.at(ctx.ida_);
  std::optional<std::string> state;
  if (ctx.nodelet_) {
    state = ctx.nodelet_->dump_state();
    ctx.nodelet_->on_stop();
  }
  ctx.node_type_ = new_type;
  ctx.services_.node_type = new_type;
  ctx.nodelet_ = reg.nodelets.factories.at(new_type)();
  rebuild_ports(ctx);
  bool restored = false;
  if (state) restored = ctx.nodelet_->restore_state(*state);
  (void)restored;  // cold start and restored start look the same from here
  ctx.nodelet_->on_start(ctx.services_);
}

void SimCluster::fail_node(NodeId id) {
  world_.remove_node(id);
  Container* c = container(id);
  if (!c) return;
  for (auto& [ida, ctxp] : c->contexts_) {
    IdaContext& ctx = *ctxp;
    if (ctx.phase_ == Phase::withdrawn || ctx.phase_ == Phase::failed) continue;
    ctx.phase_ = Phase::failed;
    auto s = idas_.find(ida);
    if (s == idas_.end()) continue;
    if (s->second.engine) s->second.engine->remove_node(id);
    if (!s->second.cfg || !s->second.cfg->members.count(id)) continue;

    RepairReport rep = handle_failure(id, *s->second.cfg, params_.repair);
    std::map<std::string, std::string> details;
    details["damaged"] = rep.damaged ? "1" : "0";
    details["ida_failed"] = rep.ida_failed ? "1" : "0";
    record(ida, "failed", id, details);
    std::set<NodeId> cascade(rep.cascade.begin(), rep.cascade.end());
    for (NodeId n : rep.frozen)
      record(ida, "frozen", n, {{"cascade", cascade.count(n) ? "1" : "0"}});
    for (const auto& [n, t] : rep.promoted) record(ida, "promoted", n, {{"type", t}});
    sync_ida(ida);
  }
}

// ---------------------------------------------------------------- dispatch

void SimCluster::dispatch(IdaContext& ctx) {
  if (ctx.phase_ != Phase::running || !ctx.nodelet_) return;
  IdaState& st = idas_.at(ctx.ida_);
  const NodeId self = ctx.node_;

  std::set<std::string> tmpls;
  for (auto& p : ctx.ports_)
    if (p->alive_) tmpls.insert(p->tmpl_);
  for (const auto& tmpl : tmpls) {
    while (auto m = world_.receive(self, ctx.ida_, port_channel(tmpl))) {
      Port* p = ctx.port(tmpl, m->src);
      if (!p) {
        ++severed_;  // connection gone: a repair concern, not nodelet input
        continue;
      }
      ctx.nodelet_->on_message(*p, m->body);
    }
  }

  for (auto& p : ctx.ports_) {
    if (!p->alive_) continue;
    while (!p->outgoing_.empty()) {
      std::string body = std::move(p->outgoing_.front());
      p->outgoing_.pop_front();
      const std::string peer_channel = port_channel(reciprocal(*st.spec, p->tmpl_).name);
      Communique msg{self, p->remote_, ctx.ida_, peer_channel,
                     world_.next_seq(self, p->remote_, peer_channel), std::move(body)};
      world_.send(msg);
    }
  }

  ctx.nodelet_->on_tick(world_.now());
}

void SimCluster::start_ticks() {
  if (ticking_) return;
  ticking_ = true;
  // Self-rescheduling cadence; containers iterate by node id, contexts by ida.
  auto chain = std::make_shared<std::function<void()>>();
  *chain = [this, chain] {
    if (!ticking_) return;
    for (auto& [node, container] : containers_)
      for (auto& [ida, ctx] : container->contexts_) dispatch(*ctx);
    world_.schedule(world_.now() + params_.tick_ms, *chain);
  };
  world_.schedule(world_.now() + params_.tick_ms, *chain);
}

}  // namespace idaf
