#include "idaf/topology_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "idaf/builtin_topologies.hpp"

namespace idaf {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string delivery_to_string(Delivery d) {
  switch (d) {
    case Delivery::once: return "once";
    case Delivery::intermittent: return "intermittent";
    case Delivery::lasting: return "lasting";
  }
  return "lasting";
}

Delivery delivery_from_string(const std::string& s) {
  if (s == "once") return Delivery::once;
  if (s == "intermittent") return Delivery::intermittent;
  if (s == "lasting") return Delivery::lasting;
  throw std::runtime_error("bad delivery: " + s);
}

ordered_json multiplicity_to_json(const Multiplicity& q) {
  if (q.is_unbounded()) return "inf";
  return q.limit();
}

Multiplicity multiplicity_from_json(const ordered_json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return Multiplicity::unbounded();
    throw std::runtime_error("bad multiplicity: " + j.get<std::string>());
  }
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() < 1)
    throw std::runtime_error("multiplicity must be a positive integer or \"inf\"");
  return Multiplicity::finite(j.get<std::uint32_t>());
}

}  // namespace

TopologySpec topology_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("topology file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("topology file must hold a JSON object");

  TopologySpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    for (const auto& t : j.at("node_types")) spec.node_types.push_back(t.get<std::string>());
    for (const auto& t : j.at("connection_types"))
      spec.connection_types.push_back(
          {t.at("name").get<std::string>(),
           delivery_from_string(t.value("delivery", std::string("lasting")))});
    for (const auto& c : j.at("connections")) {
      TopologyConnection tc;
      tc.name = c.at("name").get<std::string>();
      for (const auto& t : c.at("t1")) tc.t1.insert(t.get<std::string>());
      for (const auto& t : c.at("t2")) tc.t2.insert(t.get<std::string>());
      tc.type = c.at("o").get<std::string>();
      if (c.contains("d") && !c.at("d").is_null()) tc.direction = c.at("d").get<std::string>();
      tc.multiplicity = multiplicity_from_json(c.at("q"));
      tc.required = c.at("f").get<bool>();
      if (c.contains("r") && !c.at("r").is_null()) tc.group = c.at("r").get<std::string>();
      spec.connections.push_back(std::move(tc));
    }
    if (j.contains("groups"))
      for (const auto& g : j.at("groups")) {
        ContingentGroup cg;
        cg.ref = g.at("ref").get<std::string>();
        cg.owner = g.at("owner").get<std::string>();
        for (const auto& m : g.at("members")) cg.members.push_back(m.get<std::string>());
        cg.rigid = g.value("rigid", false);
        spec.groups.push_back(std::move(cg));
      }
    for (const auto& [from, to] : j.at("wiring").items())
      spec.wiring[from] = to.get<std::string>();
    const auto& pol = j.at("selection_policy");
    spec.selection.initial = pol.at("initial").get<std::string>();
    spec.selection.join_default = pol.at("join_default").get<std::string>();
    if (j.contains("locator") && !j.at("locator").is_null()) {
      const std::string name = j.at("locator").get<std::string>();
      spec.locator = find_locator(name);
      if (!spec.locator) throw std::runtime_error("unknown locator: " + name);
    }
    if (j.contains("type_change"))
      for (const auto& [from, to] : j.at("type_change").items())
        spec.type_change[from] = to.get<std::string>();
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(std::string("topology file malformed: ") + e.what());
  }
  return spec;
}

TopologySpec load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read topology file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return topology_from_json(buf.str());
}

std::string topology_to_json(const TopologySpec& spec) {
  ordered_json j;
  j["name"] = spec.name;
  j["node_types"] = spec.node_types;
  j["connection_types"] = ordered_json::array();
  for (const auto& t : spec.connection_types)
    j["connection_types"].push_back({{"name", t.name}, {"delivery", delivery_to_string(t.delivery)}});
  j["connections"] = ordered_json::array();
  for (const auto& c : spec.connections) {
    ordered_json row;
    row["name"] = c.name;
    row["t1"] = c.t1;
    row["t2"] = c.t2;
    row["o"] = c.type;
    row["d"] = c.direction ? ordered_json(*c.direction) : ordered_json(nullptr);
    row["q"] = multiplicity_to_json(c.multiplicity);
    row["f"] = c.required;
    row["r"] = c.group ? ordered_json(*c.group) : ordered_json(nullptr);
    j["connections"].push_back(std::move(row));
  }
  j["groups"] = ordered_json::array();
  for (const auto& g : spec.groups)
    j["groups"].push_back(
        {{"ref", g.ref}, {"owner", g.owner}, {"members", g.members}, {"rigid", g.rigid}});
  j["wiring"] = ordered_json::object();
  for (const auto& [from, to] : spec.wiring) j["wiring"][from] = to;
  j["selection_policy"] = {{"initial", spec.selection.initial},
                           {"join_default", spec.selection.join_default}};
  if (spec.locator) j["locator"] = spec.locator->name;
  if (!spec.type_change.empty()) {
    j["type_change"] = ordered_json::object();
    for (const auto& [from, to] : spec.type_change) j["type_change"][from] = to;
  }
  return j.dump(2) + "\n";
}

}  // namespace idaf
