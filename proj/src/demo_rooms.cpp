#include "idaf/demo_rooms.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <random>
#include <set>

#include "idaf/builtin_topologies.hpp"
#include "idaf/runtime.hpp"
#include "idaf/transport.hpp"

namespace idaf {

namespace {

constexpr const char* kIda = "room-explorer";
constexpr std::uint32_t kStartCookies = 5;

struct RoomsShared {
  std::vector<std::string> lines;
  std::uint64_t tick_ms{50};
  std::uint64_t epoch{0};  // virtual time of game tick zero
};

class RoomNodelet : public Nodelet {
 public:
  explicit RoomNodelet(std::shared_ptr<RoomsShared> shared) : shared_(std::move(shared)) {}

  void on_start(const NodeletServices& services) override {
    services_ = services;
    rng_.seed(services.seed);
    const std::string person = "p" + std::to_string(services.self);
    residents_[person] = kStartCookies;
    log("enter", person, kStartCookies);
  }

  void on_message(Port& port, const std::string& payload) override {
    auto kv = decode_kv(payload);
    auto kind = kv.find("k");
    if (kind == kv.end()) return;
    if (kind->second == "person") {
      if (!kv.count("id") || !kv.count("c") || !kv.count("x")) {
        log("bad_payload", "", 0);
        return;  // sender keeps the person; nothing was admitted
      }
      const std::string id = kv["id"];
      const std::uint32_t cookies = static_cast<std::uint32_t>(std::stoul(kv["c"]));
      residents_[id] = cookies;
      log("arrive", id, cookies);
      port.send(encode_kv({{"k", "ack"}, {"x", kv["x"]}}));
      return;
    }
    if (kind->second == "ack" && kv.count("x")) {
      const std::uint64_t token = std::stoull(kv["x"]);
      auto it = limbo_.find(token);
      if (it == limbo_.end()) return;
      log("depart", it->second.first, it->second.second);
      limbo_.erase(it);
    }
  }

  void on_tick(std::uint64_t) override {
    std::vector<std::string> ids;
    for (const auto& [id, cookies] : residents_) ids.push_back(id);
    for (const auto& id : ids) {
      auto it = residents_.find(id);
      if (it == residents_.end()) continue;  // moved away earlier this tick
      switch (std::uniform_int_distribution<int>(0, 3)(rng_)) {
        case 0: {  // move
          auto ports = services_.ports();
          if (ports.empty()) {
            log("stay", id, it->second);
            break;
          }
          const std::size_t pick =
              std::uniform_int_distribution<std::size_t>(0, ports.size() - 1)(rng_);
          const std::uint64_t token = (services_.self << 24) | next_token_++;
          const bool sent = ports[pick]->send(encode_kv({{"k", "person"},
                                                         {"id", id},
                                                         {"c", std::to_string(it->second)},
                                                         {"x", std::to_string(token)}}));
          if (!sent) {
            log("stay", id, it->second);
            break;
          }
          limbo_[token] = {id, it->second};
          log("move", id, it->second);
          residents_.erase(it);
          break;
        }
        case 1:
          log("stay", id, it->second);
          break;
        case 2:  // pick up one cookie from the jar
          if (jar_ > 0) {
            --jar_;
            ++it->second;
          }
          log("pickup", id, it->second);
          break;
        case 3:  // drop one cookie into the jar
          if (it->second > 0) {
            --it->second;
            ++jar_;
          }
          log("drop", id, it->second);
          break;
      }
    }
  }

  std::uint32_t jar() const { return jar_; }
  const std::map<std::string, std::uint32_t>& residents() const { return residents_; }
  const std::map<std::uint64_t, std::pair<std::string, std::uint32_t>>& limbo() const {
    return limbo_;
  }

 private:
  void log(const std::string& event, const std::string& person, std::uint32_t cookies) {
    const std::uint64_t now = services_.now();
    const std::uint64_t tick =
        now > shared_->epoch ? (now - shared_->epoch) / shared_->tick_ms : 0;
    nlohmann::ordered_json j;
    j["tick"] = tick;
    j["room"] = node_name(services_.self);
    j["event"] = event;
    j["person"] = person;
    j["cookies"] = cookies;
    shared_->lines.push_back(j.dump());
  }

  std::shared_ptr<RoomsShared> shared_;
  NodeletServices services_;
  std::mt19937_64 rng_;
  std::uint32_t jar_{0};
  std::map<std::string, std::uint32_t> residents_;
  std::map<std::uint64_t, std::pair<std::string, std::uint32_t>> limbo_;
  std::uint64_t next_token_{1};
};

bool wait_member(SimCluster& cluster, NodeId node, std::uint64_t patience = 300000) {
  const std::uint64_t deadline = cluster.world().now() + patience;
  while (cluster.world().now() < deadline) {
    auto* cfg = cluster.configuration(kIda);
    if (cfg && cfg->members.count(node)) return true;
    auto* ctx = cluster.container(node)->context(kIda);
    if (ctx && ctx->phase() == Phase::failed) return false;
    cluster.world().run_until(cluster.world().now() + 50);
  }
  return false;
}

struct Census {
  std::uint32_t persons{0};
  std::uint32_t cookies{0};
};

Census take_census(SimCluster& cluster, const std::vector<NodeId>& nodes) {
  Census c;
  std::map<std::string, std::uint32_t> people;
  std::set<std::string> resident_ids;
  for (NodeId n : nodes) {
    auto* ctx = cluster.container(n)->context(kIda);
    auto* room = ctx ? dynamic_cast<RoomNodelet*>(ctx->nodelet()) : nullptr;
    if (!room) continue;
    c.cookies += room->jar();
    for (const auto& [id, cookies] : room->residents()) {
      people[id] = cookies;
      resident_ids.insert(id);
    }
  }
  // A person still in a sender's limbo list counts only until the resident
  // copy appears somewhere; the resident copy is the live one.
  for (NodeId n : nodes) {
    auto* ctx = cluster.container(n)->context(kIda);
    auto* room = ctx ? dynamic_cast<RoomNodelet*>(ctx->nodelet()) : nullptr;
    if (!room) continue;
    for (const auto& [token, entry] : room->limbo())
      if (!resident_ids.count(entry.first)) people[entry.first] = entry.second;
  }
  c.persons = static_cast<std::uint32_t>(people.size());
  for (const auto& [id, cookies] : people) c.cookies += cookies;
  return c;
}

}  // namespace

RoomsDemoReport run_rooms_demo(const RoomsDemoParams& params) {
  RoomsDemoReport rep;
  TopologySpec spec = mesh4();
  ClusterParams cp;
  cp.sim.seed = params.seed;
  cp.tick_ms = params.tick_ms;
  SimCluster cluster(cp);
  cluster.set_trace(params.trace);

  auto shared = std::make_shared<RoomsShared>();
  shared->tick_ms = params.tick_ms;

  Advertisement adv;
  adv.kind = "ida";
  adv.name = kIda;
  adv.id = std::string("ida/") + kIda;
  adv.spec_ref = spec.name;

  Nodeletset set;
  set.factories["node"] = [shared] { return std::make_unique<RoomNodelet>(shared); };

  const std::vector<NodeId> nodes{1, 2, 3, 4};
  for (NodeId n : nodes) cluster.add_node(n);
  cluster.register_everywhere(adv, spec, set);

  // Rooms one and two join on their own; room three is placed east-side so
  // the fourth join can close the square instead of extending a corridor.
  for (NodeId n : nodes) {
    if (n == 3) {
      JoinPlan plan;
      plan.node_type = "node";
      plan.bindings = {{"east", 1}};
      cluster.container(n)->participate(kIda, plan);
    } else {
      cluster.container(n)->participate(kIda);
    }
    if (!wait_member(cluster, n)) {
      rep.error = "join failed for " + node_name(n);
      return rep;
    }
  }

  auto* cfg = cluster.configuration(kIda);
  rep.square_edges = static_cast<std::uint32_t>(cfg->connections.size());
  for (const auto& e : cfg->connections)
    if (e.n1 == 4 || e.n2 == 4) ++rep.last_join_bindings;

  SimWorld& world = cluster.world();
  shared->epoch = world.now();
  cluster.start_ticks();

  rep.ok = true;
  Census census = take_census(cluster, nodes);
  if (census.persons != 4 || census.cookies != 20) {
    rep.ok = false;
    rep.first_bad_tick = 0;
  }
  for (std::uint64_t tick = 1; rep.ok && tick <= params.steps; ++tick) {
    world.run_until(shared->epoch + tick * params.tick_ms);
    census = take_census(cluster, nodes);
    if (census.persons != 4 || census.cookies != 20) {
      rep.ok = false;
      rep.first_bad_tick = tick;
    }
  }
  cluster.stop_ticks();

  rep.final_persons = census.persons;
  rep.final_cookies = census.cookies;
  rep.log_lines = shared->lines;
  return rep;
}

}  // namespace idaf
