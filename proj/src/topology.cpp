#include "idaf/topology.hpp"

#include <algorithm>
#include <stdexcept>

namespace idaf {

std::string node_name(NodeId id) { return "n" + std::to_string(id); }

Multiplicity Multiplicity::unbounded() {
  Multiplicity m;
  m.unbounded_ = true;
  return m;
}

Multiplicity Multiplicity::finite(std::uint32_t n) {
  if (n < 1) throw std::invalid_argument("multiplicity must be >= 1");
  Multiplicity m;
  m.value_ = n;
  return m;
}

std::uint32_t Multiplicity::limit() const {
  if (unbounded_) throw std::logic_error("unbounded multiplicity has no limit");
  return value_;
}

const TopologyConnection* TopologySpec::find_connection(const std::string& n) const {
  for (const auto& c : connections)
    if (c.name == n) return &c;
  return nullptr;
}

const ConnectionType* TopologySpec::find_connection_type(const std::string& n) const {
  for (const auto& t : connection_types)
    if (t.name == n) return &t;
  return nullptr;
}

const ContingentGroup* TopologySpec::find_group(const std::string& ref) const {
  for (const auto& g : groups)
    if (g.ref == ref) return &g;
  return nullptr;
}

bool TopologySpec::has_node_type(const std::string& n) const {
  return std::find(node_types.begin(), node_types.end(), n) != node_types.end();
}

namespace {

void flag(ValidationReport& report, std::string code, std::string detail) {
  report.violations.push_back({std::move(code), std::move(detail)});
}

bool mask_resolves(const TopologySpec& spec, const NodeTypeMask& mask) {
  if (mask.empty()) return false;
  for (const auto& t : mask)
    if (!spec.has_node_type(t)) return false;
  return true;
}

}  // namespace

ValidationReport validate(const TopologySpec& spec) {
  ValidationReport report;

  if (spec.node_types.empty()) flag(report, "no node types", spec.name);
  for (std::size_t i = 0; i < spec.node_types.size(); ++i)
    for (std::size_t j = i + 1; j < spec.node_types.size(); ++j)
      if (spec.node_types[i] == spec.node_types[j])
        flag(report, "duplicate node type", spec.node_types[i]);

  for (std::size_t i = 0; i < spec.connections.size(); ++i)
    for (std::size_t j = i + 1; j < spec.connections.size(); ++j)
      if (spec.connections[i].name == spec.connections[j].name)
        flag(report, "duplicate connection", spec.connections[i].name);

  for (const auto& c : spec.connections) {
    if (!mask_resolves(spec, c.t1)) flag(report, "unresolved mask", c.name + "/t1");
    if (!mask_resolves(spec, c.t2)) flag(report, "unresolved mask", c.name + "/t2");
    if (!spec.find_connection_type(c.type))
      flag(report, "unknown connection type", c.name + "/" + c.type);

    if (c.direction) {
      if (!spec.locator) {
        flag(report, "direction without locator", c.name);
      } else if (!spec.locator->step(*c.direction)) {
        flag(report, "unknown direction", c.name + "/" + *c.direction);
      }
    }

    if (c.group) {
      const ContingentGroup* g = spec.find_group(*c.group);
      if (!g) {
        flag(report, "unknown contingent group", c.name + "/" + *c.group);
      } else if (std::find(g->members.begin(), g->members.end(), c.name) == g->members.end()) {
        flag(report, "group back-reference mismatch", c.name + "/" + *c.group);
      }
    }
  }

  // Reciprocal wiring: total, involutive, masks cross-matched, directions negated.
  for (const auto& c : spec.connections) {
    auto it = spec.wiring.find(c.name);
    if (it == spec.wiring.end()) {
      flag(report, "missing reciprocal", c.name);
      continue;
    }
    const TopologyConnection* r = spec.find_connection(it->second);
    if (!r) {
      flag(report, "missing reciprocal", c.name + " -> " + it->second);
      continue;
    }
    auto back = spec.wiring.find(r->name);
    if (back == spec.wiring.end() || back->second != c.name)
      flag(report, "non-involutive wiring", c.name);
    if (c.t1 != r->t2 || c.t2 != r->t1)
      flag(report, "mask mismatch", c.name + "/" + r->name);
    if (c.direction && spec.locator) {
      const Coordinates* mine = spec.locator->step(*c.direction);
      if (!r->direction) {
        flag(report, "reciprocal missing direction", c.name + "/" + r->name);
      } else {
        const Coordinates* theirs = spec.locator->step(*r->direction);
        if (mine && theirs && *theirs != negate(*mine))
          flag(report, "reciprocal direction not opposite", c.name + "/" + r->name);
      }
    }
  }
  for (const auto& [from, to] : spec.wiring)
    if (!spec.find_connection(from))
      flag(report, "wiring names unknown connection", from + " -> " + to);

  for (const auto& g : spec.groups) {
    if (!spec.has_node_type(g.owner)) flag(report, "unknown group owner", g.ref + "/" + g.owner);
    if (g.members.empty()) flag(report, "empty contingent group", g.ref);

    bool any_required = false, any_optional = false;
    for (const auto& m : g.members) {
      const TopologyConnection* c = spec.find_connection(m);
      if (!c) {
        flag(report, "unknown group member", g.ref + "/" + m);
        continue;
      }
      if (!c->group || *c->group != g.ref)
        flag(report, "group back-reference mismatch", g.ref + "/" + m);
      if (!c->t1.count(g.owner)) flag(report, "group member not owned", g.ref + "/" + m);
      (c->required ? any_required : any_optional) = true;
      if (g.rigid && !c->direction) flag(report, "rigid group without directions", g.ref + "/" + m);
    }
    if (any_required && any_optional) flag(report, "mixed contingent group", g.ref);
    if (g.rigid && !spec.locator) flag(report, "rigid group without locator", g.ref);
  }

  // Buildability: some node type must be joinable into an empty configuration.
  bool seed_found = false;
  for (const auto& t : spec.node_types) {
    bool any_required = false;
    for (const auto& c : spec.connections)
      if (c.required && c.t1.count(t)) any_required = true;
    if (!any_required) seed_found = true;
  }
  if (!seed_found) flag(report, "no seed node type", spec.name);

  if (!spec.selection.initial.empty()) {
    if (!spec.has_node_type(spec.selection.initial)) {
      flag(report, "unknown initial type", spec.selection.initial);
    } else {
      for (const auto& c : spec.connections)
        if (c.required && c.t1.count(spec.selection.initial)) {
          flag(report, "initial type has required connections", spec.selection.initial);
          break;
        }
    }
  } else {
    flag(report, "no initial type", spec.name);
  }
  if (!spec.has_node_type(spec.selection.join_default))
    flag(report, "unknown join default type", spec.selection.join_default);

  for (const auto& [from, to] : spec.type_change) {
    if (!spec.has_node_type(from) || !spec.has_node_type(to))
      flag(report, "unknown type in change map", from + " -> " + to);
  }

  return report;
}

static std::vector<const TopologyConnection*> connections_for(const TopologySpec& spec,
                                                              const std::string& t,
                                                              bool required) {
  if (!spec.has_node_type(t)) throw std::invalid_argument("unknown node type: " + t);
  std::vector<const TopologyConnection*> out;
  for (const auto& c : spec.connections)
    if (c.required == required && c.t1.count(t)) out.push_back(&c);
  return out;
}

std::vector<const TopologyConnection*> required_connections(const TopologySpec& spec,
                                                            const std::string& t) {
  return connections_for(spec, t, true);
}

std::vector<const TopologyConnection*> optional_connections(const TopologySpec& spec,
                                                            const std::string& t) {
  return connections_for(spec, t, false);
}

const TopologyConnection& reciprocal(const TopologySpec& spec, const std::string& connection) {
  auto it = spec.wiring.find(connection);
  if (it == spec.wiring.end())
    throw std::invalid_argument("connection not wired: " + connection);
  const TopologyConnection* r = spec.find_connection(it->second);
  if (!r) throw std::invalid_argument("reciprocal missing: " + it->second);
  return *r;
}

Classification classify(const TopologySpec& spec) {
  if (spec.groups.empty()) return Classification::unstructured;
  for (const auto& g : spec.groups)
    if (g.rigid) return Classification::rigidly_structured;
  return Classification::structured;
}

std::string select_node_type(const TopologySpec& spec, const ConfigurationSummary& summary) {
  if (summary.node_count == 0) return spec.selection.initial;
  if (spec.selection.context_rule) return spec.selection.context_rule(summary);
  return spec.selection.join_default;
}

}  // namespace idaf
