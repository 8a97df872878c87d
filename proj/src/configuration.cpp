#include "idaf/configuration.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "idaf/locator.hpp"

namespace idaf {

std::uint32_t Configuration::slots_used(NodeId n, const std::string& tmpl) const {
  auto it = slot_usage.find({n, tmpl});
  return it == slot_usage.end() ? 0 : it->second;
}

bool Configuration::slot_free(NodeId n, const std::string& tmpl) const {
  const TopologyConnection* c = spec->find_connection(tmpl);
  if (!c) return false;
  return c->multiplicity.admits(slots_used(n, tmpl));
}

std::optional<NodeId> Configuration::neighbor(NodeId n, const std::string& direction) const {
  for (const auto& e : connections) {
    if (e.n1 == n && e.direction && *e.direction == direction) return e.n2;
    if (e.n2 == n) {
      auto w = spec->wiring.find(e.tmpl);
      if (w == spec->wiring.end()) continue;  // off-template edges do not navigate
      const TopologyConnection* r = spec->find_connection(w->second);
      if (r && r->direction && *r->direction == direction) return e.n1;
    }
  }
  return std::nullopt;
}

bool Configuration::instantiates(NodeId n, const std::string& tmpl) const {
  return peer_via(n, tmpl).has_value();
}

std::optional<NodeId> Configuration::peer_via(NodeId n, const std::string& tmpl) const {
  for (const auto& e : connections) {
    if (e.n1 == n && e.tmpl == tmpl) return e.n2;
    if (e.n2 == n) {
      auto w = spec->wiring.find(e.tmpl);
      if (w != spec->wiring.end() && w->second == tmpl) return e.n1;
    }
  }
  return std::nullopt;
}

std::uint32_t Configuration::degree(NodeId n) const {
  std::uint32_t d = 0;
  for (const auto& e : connections)
    if (e.n1 == n || e.n2 == n) ++d;
  return d;
}

ConfigurationSummary Configuration::summary() const {
  ConfigurationSummary s;
  s.node_count = static_cast<std::uint32_t>(members.size());
  for (const auto& [id, type] : members) ++s.type_counts[type];
  return s;
}

// ---------------------------------------------------------------- views

namespace {

std::vector<NodeId> candidates_impl(const TopologySpec& spec,
                                    const std::map<NodeId, std::string>& members,
                                    const std::string& tmpl,
                                    const std::function<std::uint32_t(NodeId, const std::string&)>& used) {
  const TopologyConnection* c = spec.find_connection(tmpl);
  if (!c) throw std::invalid_argument("unknown connection: " + tmpl);
  const TopologyConnection& recip = reciprocal(spec, tmpl);
  std::vector<NodeId> out;
  for (const auto& [id, type] : members) {
    if (!c->t2.count(type)) continue;
    if (!recip.multiplicity.admits(used(id, recip.name))) continue;
    out.push_back(id);
  }
  return out;
}

}  // namespace

ConfigurationSummary LiveView::summary() const { return cfg_.summary(); }
bool LiveView::is_member(NodeId n) const { return cfg_.members.count(n) > 0; }

std::vector<NodeId> LiveView::candidates(const std::string& tmpl) const {
  return candidates_impl(*cfg_.spec, cfg_.members, tmpl,
                         [this](NodeId n, const std::string& t) { return cfg_.slots_used(n, t); });
}

std::string LiveView::node_type(NodeId n) const {
  auto it = cfg_.members.find(n);
  if (it == cfg_.members.end()) throw std::invalid_argument("not a member: " + node_name(n));
  return it->second;
}

std::uint32_t LiveView::slots_used(NodeId n, const std::string& tmpl) const {
  return cfg_.slots_used(n, tmpl);
}

std::optional<NodeId> LiveView::neighbor(NodeId n, const std::string& direction) const {
  return cfg_.neighbor(n, direction);
}

SnapshotView::SnapshotView(const TopologySpec& spec, std::map<NodeId, std::string> members,
                           std::map<std::pair<NodeId, std::string>, std::uint32_t> slots,
                           std::vector<LiveConnection> edges)
    : spec_(spec), members_(std::move(members)), slots_(std::move(slots)),
      edges_(std::move(edges)) {}

SnapshotView SnapshotView::of(const Configuration& cfg) {
  return SnapshotView(*cfg.spec, cfg.members, cfg.slot_usage, cfg.connections);
}

ConfigurationSummary SnapshotView::summary() const {
  ConfigurationSummary s;
  s.node_count = static_cast<std::uint32_t>(members_.size());
  for (const auto& [id, type] : members_) ++s.type_counts[type];
  return s;
}

bool SnapshotView::is_member(NodeId n) const { return members_.count(n) > 0; }

std::vector<NodeId> SnapshotView::candidates(const std::string& tmpl) const {
  return candidates_impl(spec_, members_, tmpl,
                         [this](NodeId n, const std::string& t) { return slots_used(n, t); });
}

std::string SnapshotView::node_type(NodeId n) const {
  auto it = members_.find(n);
  if (it == members_.end()) throw std::invalid_argument("not a member: " + node_name(n));
  return it->second;
}

std::uint32_t SnapshotView::slots_used(NodeId n, const std::string& tmpl) const {
  auto it = slots_.find({n, tmpl});
  return it == slots_.end() ? 0 : it->second;
}

std::optional<NodeId> SnapshotView::neighbor(NodeId n, const std::string& direction) const {
  for (const auto& e : edges_) {
    if (e.n1 == n && e.direction && *e.direction == direction) return e.n2;
    if (e.n2 == n) {
      const TopologyConnection& r = reciprocal(spec_, e.tmpl);
      if (r.direction && *r.direction == direction) return e.n1;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- reservations

std::optional<Reservation> ReservationBook::reserve(const Configuration& cfg, NodeId peer,
                                                    const std::string& tmpl, std::uint64_t now,
                                                    std::uint64_t lease_ms) {
  const TopologyConnection* c = cfg.spec->find_connection(tmpl);
  if (!c || !cfg.members.count(peer)) return std::nullopt;
  if (!c->multiplicity.admits(cfg.slots_used(peer, tmpl) + reserved(peer, tmpl, now)))
    return std::nullopt;
  Reservation r{peer, tmpl, next_token_++, now + lease_ms};
  entries_[r.token] = Entry{peer, tmpl, r.expires};
  return r;
}

void ReservationBook::release(std::uint64_t token) { entries_.erase(token); }

bool ReservationBook::consume(std::uint64_t token, NodeId peer, const std::string& tmpl,
                              std::uint64_t now) {
  auto it = entries_.find(token);
  if (it == entries_.end()) return false;
  if (it->second.peer != peer || it->second.tmpl != tmpl || it->second.expires < now) return false;
  entries_.erase(it);
  return true;
}

std::uint32_t ReservationBook::reserved(NodeId peer, const std::string& tmpl,
                                        std::uint64_t now) const {
  std::uint32_t n = 0;
  for (const auto& [token, e] : entries_)
    if (e.peer == peer && e.tmpl == tmpl && e.expires >= now) ++n;
  return n;
}

// ---------------------------------------------------------------- bootstrap

Configuration bootstrap(const TopologySpec& spec, NodeId first, const std::string& ida) {
  ValidationReport report = validate(spec);
  if (!report.ok()) {
    std::ostringstream msg;
    msg << "invalid topology " << spec.name << ":";
    for (const auto& v : report.violations) msg << " [" << v.code << ": " << v.detail << "]";
    throw std::invalid_argument(msg.str());
  }
  Configuration cfg;
  cfg.ida = ida.empty() ? spec.name : ida;
  cfg.spec = &spec;
  cfg.members[first] = spec.selection.initial;
  return cfg;
}

// ---------------------------------------------------------------- planning

namespace {

double score_of(const NodeParticulars& particulars, const RankingPolicy& policy, NodeId n) {
  auto node_it = particulars.find(n);
  if (node_it == particulars.end()) return 0.0;
  double s = 0.0;
  for (const auto& [attr, weight] : policy.metrics) {
    auto a = node_it->second.find(attr);
    if (a != node_it->second.end()) s += weight * a->second;
  }
  return s;
}

bool passes_restrictions(const NodeParticulars& particulars, const RankingPolicy& policy,
                         NodeId n) {
  for (const auto& [attr, min_value] : policy.restrictions) {
    auto node_it = particulars.find(n);
    if (node_it == particulars.end()) return false;
    auto a = node_it->second.find(attr);
    if (a == node_it->second.end() || a->second < min_value) return false;
  }
  return true;
}

using Overlay = std::map<std::pair<NodeId, std::string>, std::uint32_t>;

std::uint32_t overlay_used(const Overlay& overlay, NodeId n, const std::string& tmpl) {
  auto it = overlay.find({n, tmpl});
  return it == overlay.end() ? 0 : it->second;
}

struct Planner {
  const TopologySpec& spec;
  const ConfigView& view;
  const NodeParticulars& particulars;
  const RankingPolicy& policy;
  NodeId joiner;
  Overlay overlay;  // tentative slot uses accumulated during planning

  bool peer_capacity(const Overlay& local, NodeId peer, const std::string& peer_tmpl) const {
    const TopologyConnection* c = spec.find_connection(peer_tmpl);
    return c && c->multiplicity.admits(view.slots_used(peer, peer_tmpl) +
                                       overlay_used(local, peer, peer_tmpl));
  }

  bool joiner_capacity(const Overlay& local, const std::string& tmpl) const {
    const TopologyConnection* c = spec.find_connection(tmpl);
    return c && c->multiplicity.admits(overlay_used(local, joiner, tmpl));
  }

  void bind_into(Overlay& local, const std::string& tmpl, NodeId peer) const {
    ++local[{joiner, tmpl}];
    ++local[{peer, reciprocal(spec, tmpl).name}];
  }

  // Ranked shortlist for one connection template under a tentative overlay.
  std::vector<NodeId> shortlist(const Overlay& local, const std::string& tmpl) const {
    const std::string recip = reciprocal(spec, tmpl).name;
    std::vector<NodeId> cands;
    for (NodeId p : view.candidates(tmpl)) {
      if (p == joiner) continue;
      if (!passes_restrictions(particulars, policy, p)) continue;
      // The directory certifies base capacity; re-check only peers this
      // plan has already loaded tentatively, keeping the probe local.
      if (overlay_used(local, p, recip) > 0 && !peer_capacity(local, p, recip)) continue;
      cands.push_back(p);
    }
    std::stable_sort(cands.begin(), cands.end(), [&](NodeId a, NodeId b) {
      double sa = score_of(particulars, policy, a), sb = score_of(particulars, policy, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    if (cands.size() > policy.shortlist) cands.resize(policy.shortlist);
    return cands;
  }
};

struct Anchor {
  std::uint32_t bound;
  double total_score;
  NodeId peer;
  std::size_t member_index;
  std::vector<std::pair<std::size_t, Binding>> binds;  // member index -> binding
};

}  // namespace

JoinResult plan_join_as(NodeId joiner, const std::string& node_type, const TopologySpec& spec,
                        const ConfigView& view, const NodeParticulars& particulars,
                        const RankingPolicy& policy, std::uint64_t rng_seed) {
  (void)rng_seed;  // ranking is deterministic; seed kept for pluggable policies
  if (view.is_member(joiner)) throw std::invalid_argument("joiner already a member");
  if (!spec.has_node_type(node_type)) throw std::invalid_argument("unknown node type: " + node_type);

  JoinPlan plan;
  plan.joiner = joiner;
  plan.node_type = node_type;

  Planner ctx{spec, view, particulars, policy, joiner, {}};

  // Work items in declaration order, required first; each contingent group
  // handled once, as a unit, at its first member's position.
  struct Item {
    const TopologyConnection* conn;   // standalone
    const ContingentGroup* group;     // or group
    bool required;
  };
  std::vector<Item> items;
  std::set<std::string> seen_groups;
  for (bool required : {true, false}) {
    auto list = required ? required_connections(spec, node_type)
                         : optional_connections(spec, node_type);
    for (const TopologyConnection* c : list) {
      if (c->group) {
        if (seen_groups.insert(*c->group).second)
          items.push_back({nullptr, spec.find_group(*c->group), required});
      } else {
        items.push_back({c, nullptr, required});
      }
    }
  }

  for (const Item& item : items) {
    if (item.conn) {
      const std::string& tmpl = item.conn->name;
      std::vector<NodeId> cands;
      if (ctx.joiner_capacity(ctx.overlay, tmpl)) cands = ctx.shortlist(ctx.overlay, tmpl);
      if (cands.empty()) {
        if (item.required) return JoinFailure{tmpl, "no candidate"};
        continue;
      }
      plan.bindings.push_back({tmpl, cands.front()});
      ctx.bind_into(ctx.overlay, tmpl, cands.front());
      continue;
    }

    const ContingentGroup& g = *item.group;
    if (!g.rigid) {
      // No geometry: satisfy each member against the best free candidate.
      Overlay local = ctx.overlay;
      std::vector<std::pair<std::size_t, Binding>> binds;
      bool complete = true;
      std::string first_failed;
      for (std::size_t mi = 0; mi < g.members.size(); ++mi) {
        const std::string& tmpl = g.members[mi];
        std::vector<NodeId> cands;
        if (ctx.joiner_capacity(local, tmpl)) cands = ctx.shortlist(local, tmpl);
        if (cands.empty()) {
          complete = false;
          if (first_failed.empty()) first_failed = tmpl;
          continue;
        }
        binds.push_back({mi, {tmpl, cands.front()}});
        ctx.bind_into(local, tmpl, cands.front());
      }
      if (!complete) {
        if (item.required) return JoinFailure{first_failed, "contingent group unsatisfiable"};
        continue;  // optional groups still bind all members or none
      }
      for (auto& [mi, b] : binds) {
        plan.bindings.push_back(b);
        ctx.bind_into(ctx.overlay, b.tmpl, b.peer);
      }
      continue;
    }

    // Rigid group: pick an anchor, then resolve every other member through
    // the locator.  Resolvable members are mandatory; an anchor whose
    // resolvable peers cannot all accept is discarded.
    if (!spec.locator) throw std::logic_error("rigid group without locator: " + g.ref);
    const Locator& locator = *spec.locator;
    NeighborFn neighbors = [&](NodeId n, const std::string& d) { return view.neighbor(n, d); };

    std::vector<Anchor> anchors;
    for (std::size_t mi = 0; mi < g.members.size(); ++mi) {
      const std::string& via = g.members[mi];
      if (!ctx.joiner_capacity(ctx.overlay, via)) continue;
      for (NodeId p : ctx.shortlist(ctx.overlay, via)) {
        Overlay local = ctx.overlay;
        Anchor a{1, score_of(particulars, policy, p), p, mi, {{mi, {via, p}}}};
        ctx.bind_into(local, via, p);
        bool ok = true;
        // Each new binding opens fresh walks, so re-try unresolved members
        // from every bound peer until nothing more resolves.  Stopping
        // early would leave an adjacent occupant unbound.
        std::set<std::size_t> unbound;
        for (std::size_t wi = 0; wi < g.members.size(); ++wi)
          if (wi != mi) unbound.insert(wi);
        bool progress = true;
        while (ok && progress) {
          progress = false;
          for (auto it = unbound.begin(); ok && it != unbound.end();) {
            const std::string& want = g.members[*it];
            std::optional<NodeId> q;
            for (const auto& [bi, bb] : a.binds) {
              Address addr = contingent_address(locator, spec, bb.tmpl, want);
              q = resolve(locator, bb.peer, addr, neighbors);
              if (q) break;
            }
            if (!q) {
              ++it;
              continue;
            }
            const TopologyConnection* wc = spec.find_connection(want);
            bool accepts = *q != joiner && view.is_member(*q) &&
                           wc->t2.count(view.node_type(*q)) > 0 &&
                           ctx.peer_capacity(local, *q, reciprocal(spec, want).name) &&
                           ctx.joiner_capacity(local, want);
            for (const auto& [idx, b] : a.binds)
              if (b.peer == *q) accepts = false;
            if (!accepts) {
              ok = false;  // resolvable peer cannot accept: none are satisfied
              break;
            }
            a.binds.push_back({*it, {want, *q}});
            ctx.bind_into(local, want, *q);
            a.total_score += score_of(particulars, policy, *q);
            ++a.bound;
            it = unbound.erase(it);
            progress = true;
          }
        }
        if (item.required && !unbound.empty()) ok = false;
        if (ok) anchors.push_back(std::move(a));
      }
    }

    if (anchors.empty()) {
      if (item.required)
        return JoinFailure{g.members.empty() ? g.ref : g.members.front(),
                           "contingent group unsatisfiable"};
      continue;
    }

    std::stable_sort(anchors.begin(), anchors.end(), [](const Anchor& a, const Anchor& b) {
      if (a.bound != b.bound) return a.bound > b.bound;  // densify before sprawling
      if (a.total_score != b.total_score) return a.total_score > b.total_score;
      if (a.peer != b.peer) return a.peer < b.peer;
      return a.member_index < b.member_index;
    });

    Anchor& best = anchors.front();
    std::sort(best.binds.begin(), best.binds.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [mi, b] : best.binds) {
      plan.bindings.push_back(b);
      ctx.bind_into(ctx.overlay, b.tmpl, b.peer);
    }
  }

  return plan;
}

JoinResult plan_join(NodeId joiner, const TopologySpec& spec, const ConfigView& view,
                     const NodeParticulars& particulars, const RankingPolicy& policy,
                     std::uint64_t rng_seed) {
  const std::string type = select_node_type(spec, view.summary());
  return plan_join_as(joiner, type, spec, view, particulars, policy, rng_seed);
}

// ---------------------------------------------------------------- commit

namespace {

void refreeze_after_join(Configuration& cfg) {
  // Joins may thaw nodes whose requirements are now met; they never freeze.
  std::set<NodeId> still = compute_frozen(cfg);
  std::set<NodeId> kept;
  for (NodeId n : cfg.frozen)
    if (still.count(n)) kept.insert(n);
  cfg.frozen = std::move(kept);
  cfg.failed = !cfg.members.empty() && cfg.frozen.size() == cfg.members.size();
}

}  // namespace

std::optional<RolledBack> commit_join(const JoinPlan& plan, Configuration& cfg,
                                      ReservationBook& book,
                                      const std::vector<Reservation>& reservations,
                                      std::uint64_t now) {
  auto rollback = [&](NodeId peer, std::string reason) {
    for (const auto& r : reservations) book.release(r.token);
    return RolledBack{peer, std::move(reason)};
  };

  if (!cfg.spec) throw std::logic_error("configuration without spec");
  if (cfg.members.count(plan.joiner)) return rollback(plan.joiner, "joiner already a member");
  if (!cfg.spec->has_node_type(plan.node_type)) return rollback(plan.joiner, "unknown node type");

  for (const TopologyConnection* rc : required_connections(*cfg.spec, plan.node_type)) {
    bool bound = std::any_of(plan.bindings.begin(), plan.bindings.end(),
                             [&](const Binding& b) { return b.tmpl == rc->name; });
    if (!bound) return rollback(plan.joiner, "required connection unbound: " + rc->name);
  }

  // Validate everything before touching state.
  std::map<std::pair<NodeId, std::string>, std::uint32_t> extra;
  std::set<std::uint64_t> claimed;
  std::vector<std::uint64_t> to_consume;
  for (const Binding& b : plan.bindings) {
    const TopologyConnection* c = cfg.spec->find_connection(b.tmpl);
    if (!c) return rollback(b.peer, "unknown template: " + b.tmpl);
    if (b.peer == plan.joiner) return rollback(b.peer, "self binding");
    auto member_it = cfg.members.find(b.peer);
    if (member_it == cfg.members.end()) return rollback(b.peer, "peer not a member");
    if (!c->t1.count(plan.node_type)) return rollback(b.peer, "joiner type not admitted: " + b.tmpl);
    if (!c->t2.count(member_it->second)) return rollback(b.peer, "peer type not admitted: " + b.tmpl);

    const std::string recip = reciprocal(*cfg.spec, b.tmpl).name;
    auto& mine = extra[{plan.joiner, b.tmpl}];
    if (!c->multiplicity.admits(cfg.slots_used(plan.joiner, b.tmpl) + mine))
      return rollback(plan.joiner, "multiplicity exceeded: " + b.tmpl);
    ++mine;
    const TopologyConnection& rc = reciprocal(*cfg.spec, b.tmpl);
    auto& theirs = extra[{b.peer, recip}];
    if (!rc.multiplicity.admits(cfg.slots_used(b.peer, recip) + theirs))
      return rollback(b.peer, "multiplicity exceeded: " + recip);
    ++theirs;

    const Reservation* held = nullptr;
    for (const auto& r : reservations)
      if (!claimed.count(r.token) && r.peer == b.peer && r.tmpl == recip) {
        held = &r;
        break;
      }
    if (!held) return rollback(b.peer, "no reservation for " + recip);
    if (held->expires < now) return rollback(b.peer, "reservation expired");
    claimed.insert(held->token);
    to_consume.push_back(held->token);
  }

  for (std::size_t i = 0; i < plan.bindings.size(); ++i) {
    const Binding& b = plan.bindings[i];
    const std::string recip = reciprocal(*cfg.spec, b.tmpl).name;
    if (!book.consume(to_consume[i], b.peer, recip, now))
      return rollback(b.peer, "reservation expired");
  }
  for (const auto& r : reservations)
    if (!claimed.count(r.token)) book.release(r.token);

  cfg.members[plan.joiner] = plan.node_type;
  for (const Binding& b : plan.bindings) {
    const TopologyConnection* c = cfg.spec->find_connection(b.tmpl);
    cfg.connections.push_back({plan.joiner, b.peer, b.tmpl, c->type, c->direction});
    ++cfg.slot_usage[{plan.joiner, b.tmpl}];
    ++cfg.slot_usage[{b.peer, reciprocal(*cfg.spec, b.tmpl).name}];
  }
  refreeze_after_join(cfg);
  return std::nullopt;
}

std::optional<RolledBack> apply_plan(const JoinPlan& plan, Configuration& cfg,
                                     ReservationBook& book, std::uint64_t now) {
  std::vector<Reservation> held;
  for (const Binding& b : plan.bindings) {
    const std::string recip = reciprocal(*cfg.spec, b.tmpl).name;
    auto r = book.reserve(cfg, b.peer, recip, now);
    if (!r) {
      for (const auto& h : held) book.release(h.token);
      return RolledBack{b.peer, "reservation refused: " + recip};
    }
    held.push_back(*r);
  }
  return commit_join(plan, cfg, book, held, now);
}

// ---------------------------------------------------------------- leave / failure

namespace {

void drop_edge_slots(Configuration& cfg, const LiveConnection& e) {
  auto dec = [&](NodeId n, const std::string& tmpl) {
    auto it = cfg.slot_usage.find({n, tmpl});
    if (it == cfg.slot_usage.end()) return;
    if (it->second <= 1)
      cfg.slot_usage.erase(it);
    else
      --it->second;
  };
  dec(e.n1, e.tmpl);
  dec(e.n2, reciprocal(*cfg.spec, e.tmpl).name);
}

std::vector<LiveConnection> remove_node_edges(Configuration& cfg, NodeId node) {
  std::vector<LiveConnection> removed;
  auto it = cfg.connections.begin();
  while (it != cfg.connections.end()) {
    if (it->n1 == node || it->n2 == node) {
      drop_edge_slots(cfg, *it);
      removed.push_back(*it);
      it = cfg.connections.erase(it);
    } else {
      ++it;
    }
  }
  return removed;
}

// Does any other node's required connection run over an edge to n?
bool req_dependents_exist(const Configuration& cfg, NodeId n) {
  for (const auto& e : cfg.connections) {
    if (e.n1 != n && e.n2 != n) continue;
    const std::string other_tmpl =
        e.n1 == n ? reciprocal(*cfg.spec, e.tmpl).name : e.tmpl;
    const TopologyConnection* c = cfg.spec->find_connection(other_tmpl);
    if (c && c->required) return true;
  }
  return false;
}

// Nodes with an unsatisfiable required connection, ignoring frozen peers.
std::set<NodeId> direct_unsatisfied(const Configuration& cfg) {
  std::set<NodeId> out;
  for (const auto& [n, type] : cfg.members)
    for (const TopologyConnection* rc : required_connections(*cfg.spec, type))
      if (!cfg.instantiates(n, rc->name)) {
        out.insert(n);
        break;
      }
  return out;
}

}  // namespace

std::set<NodeId> compute_frozen(const Configuration& cfg) {
  std::set<NodeId> frozen;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [n, type] : cfg.members) {
      if (frozen.count(n)) continue;
      for (const TopologyConnection* rc : required_connections(*cfg.spec, type)) {
        bool satisfied = false;
        for (const auto& e : cfg.connections) {
          NodeId peer;
          if (e.n1 == n && e.tmpl == rc->name)
            peer = e.n2;
          else if (e.n2 == n && reciprocal(*cfg.spec, e.tmpl).name == rc->name)
            peer = e.n1;
          else
            continue;
          if (!frozen.count(peer)) {
            satisfied = true;
            break;
          }
        }
        if (!satisfied) {
          frozen.insert(n);
          changed = true;
          break;
        }
      }
    }
  }
  return frozen;
}

void leave(NodeId node, Configuration& cfg) {
  if (!cfg.members.count(node)) throw std::invalid_argument("unknown node: " + node_name(node));
  remove_node_edges(cfg, node);
  cfg.members.erase(node);
  cfg.frozen.erase(node);
  cfg.failed = !cfg.members.empty() && cfg.frozen.size() == cfg.members.size();
}

RepairReport handle_failure(NodeId node, Configuration& cfg, RepairPolicy policy) {
  if (!cfg.members.count(node)) throw std::invalid_argument("unknown node: " + node_name(node));
  const std::set<NodeId> frozen_before = cfg.frozen;
  const std::string failed_type = cfg.members.at(node);

  std::vector<LiveConnection> former = remove_node_edges(cfg, node);
  cfg.members.erase(node);
  cfg.frozen.erase(node);

  RepairReport report;
  report.damaged = !former.empty() && !cfg.members.empty();

  if (policy == RepairPolicy::promote && !direct_unsatisfied(cfg).empty()) {
    // Pick the lowest surviving node that can be re-typed into the vacant
    // role and on which no other node's required connection depends.
    std::optional<NodeId> candidate;
    for (const auto& [id, type] : cfg.members) {
      auto tc = cfg.spec->type_change.find(type);
      if (tc == cfg.spec->type_change.end() || tc->second != failed_type) continue;
      if (req_dependents_exist(cfg, id)) continue;
      candidate = id;
      break;
    }
    if (candidate) {
      remove_node_edges(cfg, *candidate);  // old connections released
      cfg.members[*candidate] = failed_type;
      report.promoted.push_back({*candidate, failed_type});
      // Re-bind the vacant position: recreate the failed node's edges with
      // the promoted node substituted, where masks and slots still allow.
      for (LiveConnection e : former) {
        (e.n1 == node ? e.n1 : e.n2) = *candidate;
        if (e.n1 == e.n2) continue;
        if (!cfg.members.count(e.n1) || !cfg.members.count(e.n2)) continue;
        const TopologyConnection* c = cfg.spec->find_connection(e.tmpl);
        if (!c) continue;
        if (!c->t1.count(cfg.members.at(e.n1)) || !c->t2.count(cfg.members.at(e.n2))) continue;
        const TopologyConnection& rc = reciprocal(*cfg.spec, e.tmpl);
        if (!c->multiplicity.admits(cfg.slots_used(e.n1, e.tmpl))) continue;
        if (!rc.multiplicity.admits(cfg.slots_used(e.n2, rc.name))) continue;
        cfg.connections.push_back(e);
        ++cfg.slot_usage[{e.n1, e.tmpl}];
        ++cfg.slot_usage[{e.n2, rc.name}];
      }
    }
  }

  std::set<NodeId> direct = direct_unsatisfied(cfg);
  cfg.frozen = compute_frozen(cfg);
  for (NodeId n : cfg.frozen) {
    if (frozen_before.count(n)) continue;
    report.frozen.push_back(n);
    if (!direct.count(n)) report.cascade.push_back(n);
  }
  cfg.failed = !cfg.members.empty() && cfg.frozen.size() == cfg.members.size();
  report.ida_failed = cfg.failed;
  return report;
}

// ---------------------------------------------------------------- verify

std::vector<Violation> verify(const Configuration& cfg) {
  std::vector<Violation> issues;
  auto flag = [&](std::string code, std::string detail) {
    issues.push_back({std::move(code), std::move(detail)});
  };
  if (!cfg.spec) {
    flag("no spec", cfg.ida);
    return issues;
  }
  const TopologySpec& spec = *cfg.spec;

  for (const auto& [n, type] : cfg.members)
    if (!spec.has_node_type(type)) flag("unknown member type", node_name(n) + "/" + type);
  for (NodeId n : cfg.frozen)
    if (!cfg.members.count(n)) flag("frozen non-member", node_name(n));

  std::map<std::pair<NodeId, std::string>, std::uint32_t> recount;
  for (const auto& e : cfg.connections) {
    const std::string where = node_name(e.n1) + "-" + node_name(e.n2) + "/" + e.tmpl;
    const TopologyConnection* c = spec.find_connection(e.tmpl);
    if (!c) {
      flag("no matching template", where);
      continue;
    }
    if (e.n1 == e.n2) flag("self loop", where);
    auto m1 = cfg.members.find(e.n1);
    auto m2 = cfg.members.find(e.n2);
    if (m1 == cfg.members.end() || m2 == cfg.members.end()) {
      flag("edge endpoint not a member", where);
      continue;
    }
    if (!c->t1.count(m1->second) || !c->t2.count(m2->second)) flag("no matching template", where);
    if (e.type != c->type) flag("connection type mismatch", where);
    if (e.direction != c->direction) flag("direction mismatch", where);
    auto w = spec.wiring.find(e.tmpl);
    if (w == spec.wiring.end()) {
      flag("missing reciprocal", where);
      continue;
    }
    ++recount[{e.n1, e.tmpl}];
    ++recount[{e.n2, w->second}];
  }

  for (const auto& [key, count] : recount) {
    const TopologyConnection* c = spec.find_connection(key.second);
    if (c && !c->multiplicity.admits(count - 1))
      flag("multiplicity exceeded", node_name(key.first) + "/" + key.second);
  }
  if (recount != cfg.slot_usage) flag("slot accounting drift", cfg.ida);

  for (const auto& [n, type] : cfg.members) {
    if (!spec.has_node_type(type)) continue;
    for (const TopologyConnection* rc : required_connections(spec, type))
      if (!cfg.instantiates(n, rc->name) && !cfg.frozen.count(n))
        flag("required connection unsatisfied", node_name(n) + "/" + rc->name);
  }

  // Contingent groups: bound sets must be complete (every member whose peer
  // position is resolvable from each bound member is itself bound) and
  // geometrically consistent, including the inverse walk.
  if (spec.locator) {
    const Locator& locator = *spec.locator;
    NeighborFn neighbors = [&](NodeId n, const std::string& d) { return cfg.neighbor(n, d); };
    for (const auto& [n, type] : cfg.members) {
      for (const ContingentGroup& g : spec.groups) {
        if (!g.rigid || g.owner != type) continue;
        std::vector<std::string> bound;
        for (const auto& m : g.members)
          if (cfg.instantiates(n, m)) bound.push_back(m);
        if (bound.empty()) continue;
        for (const auto& want : g.members) {
          bool want_bound = cfg.instantiates(n, want);
          std::optional<NodeId> expected = cfg.peer_via(n, want);
          bool resolvable_everywhere = true;
          std::optional<NodeId> found;
          for (const auto& via : bound) {
            if (via == want) continue;
            std::optional<NodeId> p = cfg.peer_via(n, via);
            if (!p) continue;
            Address addr = contingent_address(locator, spec, via, want);
            std::optional<NodeId> q = resolve(locator, *p, addr, neighbors);
            if (!q) {
              resolvable_everywhere = false;
              continue;
            }
            found = q;
            if (want_bound && *q != *expected)
              flag("rigid group inconsistent",
                   node_name(n) + "/" + want + " resolves to " + node_name(*q));
            std::optional<NodeId> back = resolve(locator, *q, inverse(spec, addr), neighbors);
            if (back && *back != *p)
              flag("rigid group inconsistent",
                   node_name(n) + "/" + want + " inverse walk misses " + node_name(*p));
          }
          if (!want_bound && found && resolvable_everywhere)
            flag("contingent group incomplete", node_name(n) + "/" + want);
        }
      }
    }
  }

  return issues;
}

// ---------------------------------------------------------------- export

GraphExport to_graph(const Configuration& cfg) {
  GraphExport g;
  g.ida = cfg.ida;
  for (const auto& [n, type] : cfg.members)
    g.nodes.push_back({n, type, cfg.frozen.count(n) > 0});
  for (const auto& e : cfg.connections) g.edges.push_back({e.n1, e.n2, e.tmpl});
  std::sort(g.edges.begin(), g.edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
    return std::tie(a.a, a.b, a.tmpl) < std::tie(b.a, b.b, b.tmpl);
  });
  return g;
}

std::string to_dot(const GraphExport& graph) {
  std::ostringstream out;
  out << "graph \"" << graph.ida << "\" {\n";
  for (const auto& n : graph.nodes) {
    out << "  " << node_name(n.id) << " [label=\"" << node_name(n.id) << "\\n" << n.type;
    if (n.frozen) out << " (frozen)";
    out << "\"";
    if (n.frozen) out << ", style=dashed";
    out << "];\n";
  }
  for (const auto& e : graph.edges)
    out << "  " << node_name(e.a) << " -- " << node_name(e.b) << " [label=\"" << e.tmpl
        << "\"];\n";
  out << "}\n";
  return out.str();
}

}  // namespace idaf
