// idas: validate topologies, render configurations, run scripted swarms and
// launch the two demo applications.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include "idaf/builtin_topologies.hpp"
#include "idaf/configuration.hpp"
#include "idaf/demo_dft.hpp"
#include "idaf/demo_rooms.hpp"
#include "idaf/dsp.hpp"
#include "idaf/scenario.hpp"
#include "idaf/socket_transport.hpp"
#include "idaf/topology_io.hpp"
#include "idaf/trace.hpp"
#include "idaf/transport.hpp"

namespace {

using namespace idaf;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct GlobalOpts {
  std::uint64_t seed{0};
  bool seed_given{false};
  std::string trace_path;
  std::string transport{"sim"};
};

TraceWriter make_trace(const GlobalOpts& g) {
  if (g.trace_path.empty()) return TraceWriter();
  return TraceWriter::to_file(g.trace_path);
}

bool write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) return false;
  f << text;
  return static_cast<bool>(f);
}

// ------------------------------------------------------------------ validate

int cmd_validate(const std::string& path) {
  TopologySpec spec;
  try {
    spec = load_topology_file(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  auto report = validate(spec);
  for (const auto& v : report.violations) std::cout << v.code << ": " << v.detail << "\n";
  return report.ok() ? kOk : kCheckFailed;
}

// --------------------------------------------------------------- graph / sim

void print_scenario_report(const ScenarioReport& rep) {
  std::cout << "joins: attempted=" << rep.joins_attempted << " completed=" << rep.joins_completed
            << "\n";
  for (const auto& j : rep.joins) {
    if (j.joined) {
      std::cout << "join " << node_name(j.node) << " at=" << j.at << " commands=" << j.commands
                << "\n";
    } else {
      std::cout << "join " << node_name(j.node) << " failed\n";
    }
  }
  for (const auto& s : rep.snapshots) {
    std::cout << "snapshot at=" << s.at << " members=" << s.members << " edges=" << s.edges
              << " frozen=" << s.frozen << " failed=" << (s.ida_failed ? 1 : 0)
              << " violations=" << s.violations.size() << "\n";
    for (const auto& v : s.violations) std::cout << "  " << v.code << ": " << v.detail << "\n";
  }
  for (const auto& n : rep.demo_notes) std::cout << n << "\n";
  for (const auto& e : rep.errors) std::cout << "error: " << e << "\n";
}

int cmd_graph(const GlobalOpts& g, const std::string& path, std::optional<std::uint64_t> at,
              const std::string& out) {
  Scenario sc;
  try {
    sc = load_scenario_file(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (g.seed_given) sc.sim.seed = g.seed;
  // No explicit time: settle past the last scripted action and render there.
  const std::uint64_t last = sc.script.empty() ? 0 : sc.script.back().at;
  const std::uint64_t target = at ? *at : last + 10000;

  ScenarioReport rep;
  try {
    rep = run_scenario(sc, make_trace(g), target);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (rep.usage_error) {
    for (const auto& e : rep.errors) std::cerr << "error: " << e << "\n";
    return kUsage;
  }
  if (rep.graph_truncated)
    std::cerr << "warning: requested time is past the script end; ran to completion\n";
  if (out.empty()) {
    std::cout << rep.dot;
  } else if (!write_text(out, rep.dot)) {
    std::cerr << "error: cannot write " << out << "\n";
    return kUsage;
  }
  return kOk;
}

int cmd_sim(const GlobalOpts& g, const std::string& path) {
  Scenario sc;
  try {
    sc = load_scenario_file(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  if (g.seed_given) sc.sim.seed = g.seed;

  ScenarioReport rep;
  try {
    rep = run_scenario(sc, make_trace(g));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  print_scenario_report(rep);
  if (rep.usage_error) {
    std::cout << "result: usage error\n";
    return kUsage;
  }
  std::cout << "result: " << (rep.ok ? "ok" : "verification failed") << "\n";
  return rep.ok ? kOk : kCheckFailed;
}

// ------------------------------------------------------------------ demo-dft

void print_dft_report(const DftDemoParams& p, const DftDemoReport& rep) {
  std::cout << "leaves=" << p.leaves << " blocks=" << p.blocks << " samples=" << p.samples
            << " seed=" << p.seed << (p.stats ? " stats" : "") << "\n";
  std::ostringstream order;
  for (std::size_t i = 0; i < rep.assembly_order.size(); ++i) {
    if (i) order << ",";
    order << rep.assembly_order[i];
  }
  std::cout << "assembly order: " << order.str() << "\n";
  for (const auto& t : rep.timings)
    std::cout << "block " << t.seq << ": " << node_name(t.node) << " sent=" << t.sent_at
              << " done=" << t.done_at << "\n";
  if (p.stats) {
    std::cout.precision(17);
    for (std::size_t i = 0; i < rep.block_stats.size(); ++i)
      std::cout << "stats " << i << ": mean=" << rep.block_stats[i].first
                << " std=" << rep.block_stats[i].second << "\n";
    std::cout.precision(6);
  }
  std::cout << "resends=" << rep.resends << "\n";
  std::cout << "completed at t=" << rep.completed_at << " (started t=" << rep.started_at << ")\n";
}

int finish_dft(const DftDemoParams& p, const DftDemoReport& rep, const std::string& out) {
  if (!rep.error.empty()) {
    std::cerr << "error: " << rep.error << "\n";
    return kCheckFailed;
  }
  print_dft_report(p, rep);
  if (!out.empty()) {
    if (p.stats) {
      std::vector<double> means, stds;
      for (const auto& [m, s] : rep.block_stats) {
        means.push_back(m);
        stds.push_back(s);
      }
      write_signal(out, means, stds);
    } else {
      write_signal(out, rep.out_real, rep.out_imag);
    }
  }
  std::cout.precision(3);
  std::cout << std::scientific << "max error vs serial: " << rep.max_error << "\n"
            << std::defaultfloat;
  std::cout.precision(6);
  if (!rep.ok) {
    std::cout << "MISMATCH: max absolute error " << rep.max_error << " exceeds 1e-09\n";
    return kCheckFailed;
  }
  std::cout << "ok\n";
  return kOk;
}

// ------------------------------------------------------ socket-mode plumbing

std::string self_exe() {
  char buf[4096];
  const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return "idas";
  buf[n] = '\0';
  return buf;
}

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  argv.reserve(args.size() + 1);
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::execv(argv[0], argv.data());
    _exit(127);
  }
  return pid;
}

void reap(std::vector<pid_t>& kids, int grace_ms) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(grace_ms);
  while (!kids.empty() && std::chrono::steady_clock::now() < deadline) {
    for (auto it = kids.begin(); it != kids.end();) {
      int status = 0;
      if (::waitpid(*it, &status, WNOHANG) == *it) {
        it = kids.erase(it);
      } else {
        ++it;
      }
    }
    if (!kids.empty()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  for (const pid_t k : kids) {
    ::kill(k, SIGKILL);
    int status = 0;
    ::waitpid(k, &status, 0);
  }
  kids.clear();
}

void nap() { std::this_thread::sleep_for(std::chrono::milliseconds(2)); }

void send_kv(SocketTransport& net, NodeId src, NodeId dst, const std::string& ida,
             const std::string& channel, const std::map<std::string, std::string>& kv) {
  Communique c;
  c.src = src;
  c.dst = dst;
  c.ida = ida;
  c.channel = channel;
  c.body = encode_kv(kv);
  c.seq = net.next_seq(src, dst, channel);
  net.send(c);
}

// ------------------------------------------------------------ socket demo-dft

constexpr const char* kDftIda = "signal-engine";
constexpr NodeId kDftRoot = 1;

int run_dft_socket(const DftDemoParams& p, const std::string& out) {
  ::signal(SIGPIPE, SIG_IGN);
  SocketParams sp;
  sp.self = kDftRoot;
  SocketTransport net(sp);
  net.add_node(kDftRoot);
  net.register_channel(kDftRoot, kDftIda, port_channel("R_to_L"));

  const std::string exe = self_exe();
  std::vector<pid_t> kids;
  for (std::uint32_t i = 0; i < p.leaves; ++i) {
    std::vector<std::string> args = {exe,
                                     "node-worker",
                                     "--role",
                                     "dft-leaf",
                                     "--node",
                                     std::to_string(kDftRoot + 1 + i),
                                     "--parent-node",
                                     std::to_string(kDftRoot),
                                     "--parent-port",
                                     std::to_string(net.listen_port())};
    if (p.stats) args.push_back("--stats");
    kids.push_back(spawn(args));
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
  auto expired = [&] { return std::chrono::steady_clock::now() > deadline; };
  auto farewell = [&] {
    for (std::uint32_t i = 0; i < p.leaves; ++i)
      send_kv(net, kDftRoot, kDftRoot + 1 + i, "", kCommsChannel, {{"cmd", "shutdown"}});
    reap(kids, 3000);
    net.stop();
  };

  std::set<NodeId> ready;
  while (ready.size() < p.leaves && !expired()) {
    while (auto m = net.receive(kDftRoot, "", kCommsChannel)) {
      auto kv = decode_kv(m->body);
      if (kv["cmd"] == "hello" && kv.count("port")) {
        net.add_peer(m->src, "127.0.0.1", static_cast<std::uint16_t>(std::stoul(kv["port"])));
        ready.insert(m->src);
      }
    }
    nap();
  }
  if (ready.size() < p.leaves) {
    std::cerr << "error: only " << ready.size() << "/" << p.leaves << " workers reported in\n";
    farewell();
    return kCheckFailed;
  }

  std::vector<double> in_real = p.input_real;
  std::vector<double> in_imag = p.input_imag;
  if (in_real.empty()) {
    in_real = demo_noise(p.blocks * p.samples, p.seed);
    in_imag.assign(in_real.size(), 0.0);
  }
  if (in_imag.size() != in_real.size()) in_imag.resize(in_real.size(), 0.0);
  auto tasks = split_blocks(in_real, in_imag, p.blocks);
  for (std::uint32_t s = 0; s < p.blocks; ++s) {
    Communique c;
    c.src = kDftRoot;
    c.dst = kDftRoot + 1 + (s % p.leaves);
    c.ida = kDftIda;
    c.channel = port_channel("L_to_R");
    c.body = encode_block(BlockKind::task, tasks[s]);
    c.seq = net.next_seq(c.src, c.dst, c.channel);
    net.send(c);
  }

  std::map<std::uint32_t, SampleBlock> got;
  std::vector<std::uint32_t> order;
  while (got.size() < p.blocks && !expired()) {
    while (auto m = net.receive(kDftRoot, kDftIda, port_channel("R_to_L"))) {
      auto dec = decode_block(m->body);
      if (!dec || dec->first == BlockKind::task) continue;
      if (got.count(dec->second.seq)) continue;
      order.push_back(dec->second.seq);
      got.emplace(dec->second.seq, std::move(dec->second));
    }
    nap();
  }
  farewell();
  if (got.size() < p.blocks) {
    std::cerr << "error: " << got.size() << "/" << p.blocks << " blocks returned\n";
    return kCheckFailed;
  }

  std::vector<double> oracle_real, oracle_imag;
  std::vector<std::pair<double, double>> oracle_stats;
  serial_pipeline(p, in_real, in_imag, oracle_real, oracle_imag, oracle_stats);

  DftDemoReport rep;
  rep.assembly_order = order;
  double err = 0.0;
  if (p.stats) {
    for (std::uint32_t s = 0; s < p.blocks; ++s) {
      const auto& blk = got.at(s);
      const double mean = blk.real.empty() ? 0.0 : blk.real[0];
      const double sd = blk.real.size() > 1 ? blk.real[1] : 0.0;
      rep.block_stats.emplace_back(mean, sd);
      err = std::max(err, std::abs(mean - oracle_stats[s].first));
      err = std::max(err, std::abs(sd - oracle_stats[s].second));
    }
  } else {
    std::vector<SampleBlock> blocks;
    blocks.reserve(p.blocks);
    for (std::uint32_t s = 0; s < p.blocks; ++s) blocks.push_back(got.at(s));
    assemble(std::move(blocks), rep.out_real, rep.out_imag);
    if (rep.out_real.size() != oracle_real.size()) {
      std::cerr << "error: output length mismatch\n";
      return kCheckFailed;
    }
    for (std::size_t i = 0; i < oracle_real.size(); ++i) {
      err = std::max(err, std::abs(rep.out_real[i] - oracle_real[i]));
      err = std::max(err, std::abs(rep.out_imag[i] - oracle_imag[i]));
    }
  }
  rep.max_error = err;
  rep.ok = err <= 1e-9;
  return finish_dft(p, rep, out);
}

int worker_dft_leaf(NodeId node, NodeId parent, std::uint16_t parent_port, bool stats) {
  ::signal(SIGPIPE, SIG_IGN);
  SocketParams sp;
  sp.self = node;
  sp.seeds = {{parent, "127.0.0.1", parent_port}};
  SocketTransport net(sp);
  net.add_node(node);
  net.register_channel(node, kDftIda, port_channel("L_to_R"));
  send_kv(net, node, parent, "", kCommsChannel,
          {{"cmd", "hello"}, {"port", std::to_string(net.listen_port())}});

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
  while (std::chrono::steady_clock::now() < deadline) {
    bool quit = false;
    while (auto m = net.receive(node, "", kCommsChannel)) {
      if (decode_kv(m->body)["cmd"] == "shutdown") quit = true;
    }
    if (quit) break;
    while (auto m = net.receive(node, kDftIda, port_channel("L_to_R"))) {
      auto dec = decode_block(m->body);
      if (!dec || dec->first != BlockKind::task) continue;
      const SampleBlock& task = dec->second;
      SampleBlock res;
      if (stats) {
        res.seq = task.seq;
        res.true_len = task.true_len;
        const std::size_t keep = std::min<std::size_t>(task.true_len, task.real.size());
        if (keep > 0) {
          auto [mean, sd] =
              mean_std(std::vector<double>(task.real.begin(), task.real.begin() + keep));
          res.real = {mean, sd};
        } else {
          res.real = {0.0, 0.0};
        }
        res.imag = {0.0, 0.0};
      } else {
        res = dft(task, true);
      }
      Communique r;
      r.src = node;
      r.dst = m->src;
      r.ida = kDftIda;
      r.channel = port_channel("R_to_L");
      r.body = encode_block(stats ? BlockKind::stats : BlockKind::result, res);
      r.seq = net.next_seq(r.src, r.dst, r.channel);
      net.send(r);
    }
    nap();
  }
  net.stop();
  return kOk;
}

// ---------------------------------------------------------- socket demo-rooms

constexpr const char* kRoomsIda = "room-explorer";
constexpr NodeId kRoomsBoss = 99;
constexpr const char* kDoor = "port:door";

int run_rooms_socket(const RoomsDemoParams& p, const std::string& out) {
  ::signal(SIGPIPE, SIG_IGN);
  SocketParams sp;
  sp.self = kRoomsBoss;
  SocketTransport net(sp);
  net.add_node(kRoomsBoss);

  const std::string exe = self_exe();
  std::vector<pid_t> kids;
  for (NodeId r = 1; r <= 4; ++r) {
    kids.push_back(spawn({exe, "node-worker", "--role", "room", "--node", std::to_string(r),
                          "--parent-node", std::to_string(kRoomsBoss), "--parent-port",
                          std::to_string(net.listen_port()), "--seed", std::to_string(p.seed),
                          "--tick-ms", std::to_string(p.tick_ms)}));
  }

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(60000 + p.steps * p.tick_ms * 2);
  auto expired = [&] { return std::chrono::steady_clock::now() > deadline; };
  auto farewell = [&] {
    for (NodeId r = 1; r <= 4; ++r)
      send_kv(net, kRoomsBoss, r, "", kCommsChannel, {{"cmd", "stop"}});
    reap(kids, 3000);
    net.stop();
  };

  std::map<NodeId, std::uint16_t> ports;
  while (ports.size() < 4 && !expired()) {
    while (auto m = net.receive(kRoomsBoss, "", kCommsChannel)) {
      auto kv = decode_kv(m->body);
      if (kv["cmd"] == "hello" && kv.count("port")) {
        const auto port = static_cast<std::uint16_t>(std::stoul(kv["port"]));
        net.add_peer(m->src, "127.0.0.1", port);
        ports[m->src] = port;
      }
    }
    nap();
  }
  if (ports.size() < 4) {
    std::cerr << "error: only " << ports.size() << "/4 rooms reported in\n";
    farewell();
    return kCheckFailed;
  }

  // Fixed square: 1=(0,0) 2=(0,-1) 3=(-1,0) 4=(-1,-1).
  const std::map<NodeId, std::map<std::string, NodeId>> wiring = {
      {1, {{"south", 2}, {"west", 3}}},
      {2, {{"north", 1}, {"west", 4}}},
      {3, {{"east", 1}, {"south", 4}}},
      {4, {{"north", 3}, {"east", 2}}},
  };
  for (const auto& [room, dirs] : wiring) {
    std::map<std::string, std::string> kv = {{"cmd", "wire"}};
    for (const auto& [dir, peer] : dirs)
      kv[dir] = std::to_string(peer) + ":" + std::to_string(ports.at(peer));
    send_kv(net, kRoomsBoss, room, "", kCommsChannel, kv);
  }

  std::ofstream log;
  if (!out.empty()) {
    log.open(out, std::ios::trunc);
    if (!log) {
      std::cerr << "error: cannot write " << out << "\n";
      farewell();
      return kUsage;
    }
  }

  std::set<NodeId> wired, stepped;
  std::map<NodeId, std::pair<std::uint32_t, std::uint32_t>> census;
  bool started = false, counting = false;
  while (census.size() < 4 && !expired()) {
    while (auto m = net.receive(kRoomsBoss, "", kCommsChannel)) {
      auto kv = decode_kv(m->body);
      const std::string& cmd = kv["cmd"];
      if (cmd == "log") {
        if (log.is_open()) log << kv["line"] << "\n";
      } else if (cmd == "wired") {
        wired.insert(m->src);
      } else if (cmd == "stepped") {
        stepped.insert(m->src);
      } else if (cmd == "census") {
        census[m->src] = {static_cast<std::uint32_t>(std::stoul(kv["persons"])),
                          static_cast<std::uint32_t>(std::stoul(kv["cookies"]))};
      }
    }
    if (!started && wired.size() == 4) {
      for (NodeId r = 1; r <= 4; ++r)
        send_kv(net, kRoomsBoss, r, "", kCommsChannel,
                {{"cmd", "start"}, {"steps", std::to_string(p.steps)}});
      started = true;
    }
    // All limbos empty means nothing is in flight; counts are stable now.
    if (!counting && stepped.size() == 4) {
      for (NodeId r = 1; r <= 4; ++r)
        send_kv(net, kRoomsBoss, r, "", kCommsChannel, {{"cmd", "report"}});
      counting = true;
    }
    nap();
  }
  farewell();
  if (log.is_open()) log.close();
  if (census.size() < 4) {
    std::cerr << "error: rooms never reported a final census\n";
    return kCheckFailed;
  }
  std::uint32_t persons = 0, cookies = 0;
  for (const auto& [room, counts] : census) {
    persons += counts.first;
    cookies += counts.second;
  }
  std::cout << "steps=" << p.steps << " seed=" << p.seed << "\n";
  std::cout << "final: persons=" << persons << " cookies=" << cookies << "\n";
  if (persons != 4 || cookies != 20) {
    std::cout << "CONSERVATION BREACH at final census\n";
    return kCheckFailed;
  }
  std::cout << "ok\n";
  return kOk;
}

struct RoomWorker {
  NodeId node;
  NodeId parent;
  std::uint64_t seed;
  std::uint64_t tick_ms;
  SocketTransport& net;

  std::map<std::string, NodeId> doors;                                  // direction -> room
  std::uint32_t jar{0};                                                 // pocket cookies
  std::map<std::string, std::uint32_t> residents;                       // person -> carrying
  std::map<std::uint64_t, std::pair<std::string, std::uint32_t>> limbo; // token -> person
  std::uint64_t next_token{1};
  std::uint64_t step{0};
  std::mt19937_64 rng;

  RoomWorker(NodeId n, NodeId par, std::uint64_t s, std::uint64_t t, SocketTransport& net_)
      : node(n), parent(par), seed(s), tick_ms(t), net(net_),
        rng(s ^ (n * 0x9E3779B97F4A7C15ULL)) {}

  void log(const std::string& event, const std::string& person, std::uint32_t cookies) {
    nlohmann::ordered_json j;
    j["tick"] = step;
    j["room"] = node_name(node);
    j["event"] = event;
    j["person"] = person;
    j["cookies"] = cookies;
    send_kv(net, node, parent, "", kCommsChannel, {{"cmd", "log"}, {"line", j.dump()}});
  }

  void pump_door() {
    while (auto m = net.receive(node, kRoomsIda, kDoor)) {
      auto kv = decode_kv(m->body);
      if (kv["k"] == "person") {
        residents[kv["id"]] = static_cast<std::uint32_t>(std::stoul(kv["c"]));
        log("arrive", kv["id"], residents[kv["id"]]);
        send_kv(net, node, m->src, kRoomsIda, kDoor, {{"k", "ack"}, {"x", kv["x"]}});
      } else if (kv["k"] == "ack") {
        auto it = limbo.find(std::stoull(kv["x"]));
        if (it != limbo.end()) {
          log("depart", it->second.first, it->second.second);
          limbo.erase(it);
        }
      }
    }
  }

  void act() {
    std::vector<std::string> ids;
    ids.reserve(residents.size());
    for (const auto& [id, cookies] : residents) ids.push_back(id);
    for (const auto& id : ids) {
      auto it = residents.find(id);
      if (it == residents.end()) continue;
      switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
        case 0: {  // move
          std::vector<NodeId> exits;
          for (const auto& [dir, peer] : doors) exits.push_back(peer);
          if (exits.empty()) {
            log("stay", id, it->second);
            break;
          }
          const std::size_t pick =
              std::uniform_int_distribution<std::size_t>(0, exits.size() - 1)(rng);
          const std::uint64_t token = (node << 24) | next_token++;
          send_kv(net, node, exits[pick], kRoomsIda, kDoor,
                  {{"k", "person"},
                   {"id", id},
                   {"c", std::to_string(it->second)},
                   {"x", std::to_string(token)}});
          limbo[token] = {id, it->second};
          log("move", id, it->second);
          residents.erase(it);
          break;
        }
        case 1:
          log("stay", id, it->second);
          break;
        case 2:
          if (jar > 0) {
            --jar;
            ++it->second;
          }
          log("pickup", id, it->second);
          break;
        case 3:
          if (it->second > 0) {
            --it->second;
            ++jar;
          }
          log("drop", id, it->second);
          break;
      }
    }
  }
};

int worker_room(NodeId node, NodeId parent, std::uint16_t parent_port, std::uint64_t seed,
                std::uint64_t tick_ms) {
  ::signal(SIGPIPE, SIG_IGN);
  SocketParams sp;
  sp.self = node;
  sp.seeds = {{parent, "127.0.0.1", parent_port}};
  SocketTransport net(sp);
  net.add_node(node);
  net.register_channel(node, kRoomsIda, kDoor);
  send_kv(net, node, parent, "", kCommsChannel,
          {{"cmd", "hello"}, {"port", std::to_string(net.listen_port())}});

  RoomWorker room(node, parent, seed, tick_ms, net);
  const std::string self = "p" + std::to_string(node);
  room.residents[self] = 5;  // a person enters the game carrying five cookies

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::minutes(10);
  std::optional<std::uint64_t> steps;
  bool reported_stepped = false;
  std::optional<std::chrono::steady_clock::time_point> next_tick;
  while (std::chrono::steady_clock::now() < deadline) {
    bool quit = false;
    while (auto m = net.receive(node, "", kCommsChannel)) {
      auto kv = decode_kv(m->body);
      const std::string& cmd = kv["cmd"];
      if (cmd == "wire") {
        for (const auto& [key, value] : kv) {
          if (key == "cmd") continue;
          const auto colon = value.find(':');
          if (colon == std::string::npos) continue;
          const NodeId peer = std::stoull(value.substr(0, colon));
          net.add_peer(peer, "127.0.0.1",
                       static_cast<std::uint16_t>(std::stoul(value.substr(colon + 1))));
          room.doors[key] = peer;
        }
        send_kv(net, node, parent, "", kCommsChannel, {{"cmd", "wired"}});
      } else if (cmd == "start") {
        steps = std::stoull(kv["steps"]);
        room.log("enter", self, room.residents[self]);
        next_tick = std::chrono::steady_clock::now() + std::chrono::milliseconds(tick_ms);
      } else if (cmd == "report") {
        std::uint32_t cookies = room.jar;
        for (const auto& [id, carrying] : room.residents) cookies += carrying;
        send_kv(net, node, parent, "", kCommsChannel,
                {{"cmd", "census"},
                 {"persons", std::to_string(room.residents.size())},
                 {"cookies", std::to_string(cookies)}});
      } else if (cmd == "stop") {
        quit = true;
      }
    }
    if (quit) break;
    room.pump_door();
    if (steps && room.step < *steps && next_tick && std::chrono::steady_clock::now() >= *next_tick) {
      ++room.step;
      room.act();
      *next_tick += std::chrono::milliseconds(tick_ms);
    }
    if (steps && room.step >= *steps && room.limbo.empty() && !reported_stepped) {
      send_kv(net, node, parent, "", kCommsChannel, {{"cmd", "stepped"}});
      reported_stepped = true;
    }
    nap();
  }
  net.stop();
  return kOk;
}

// -------------------------------------------------------------------- main

std::optional<std::map<std::uint32_t, std::uint64_t>> parse_skews(
    const std::vector<std::string>& raw) {
  std::map<std::uint32_t, std::uint64_t> skew;
  for (const auto& entry : raw) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos) return std::nullopt;
    try {
      skew[static_cast<std::uint32_t>(std::stoul(entry.substr(0, colon)))] =
          std::stoull(entry.substr(colon + 1));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return skew;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"declarative topology swarms: validate, render, simulate, demo"};
  app.require_subcommand(1);

  GlobalOpts g;
  auto* seed_opt = app.add_option("--seed", g.seed, "run seed (u64)");
  app.add_option("--trace", g.trace_path, "write a JSONL lifecycle trace to this path");
  app.add_option("--transport", g.transport, "transport backend")
      ->check(CLI::IsMember({"sim", "socket"}));

  auto* val = app.add_subcommand("validate", "check a topology file against the structural rules");
  std::string val_path;
  val->add_option("file", val_path, "topology JSON file")->required();
  val->fallthrough();

  auto* gr = app.add_subcommand("graph", "run a scenario and export the configuration as DOT");
  std::string gr_path, gr_out;
  std::uint64_t gr_at = 0;
  gr->add_option("scenario", gr_path, "scenario JSON file")->required();
  auto* gr_at_opt = gr->add_option("--at", gr_at, "virtual time to render at");
  gr->add_option("--out", gr_out, "output path (stdout when absent)");
  gr->fallthrough();

  auto* sim = app.add_subcommand("sim", "execute a scripted scenario and verify every snapshot");
  std::string sim_path;
  sim->add_option("scenario", sim_path, "scenario JSON file")->required();
  sim->fallthrough();

  auto* dft = app.add_subcommand("demo-dft", "distributed block DFT checked against the serial run");
  DftDemoParams dp;
  std::string dft_out;
  std::vector<std::string> dft_skews;
  dft->add_option("--leaves", dp.leaves, "worker count")->check(CLI::PositiveNumber);
  dft->add_option("--blocks", dp.blocks, "block count")->check(CLI::PositiveNumber);
  dft->add_option("--samples", dp.samples, "samples per block")->check(CLI::PositiveNumber);
  dft->add_flag("--stats", dp.stats, "per-block mean and deviation instead of the transform");
  dft->add_option("--out", dft_out, "write the reassembled output signal here");
  dft->add_option("--block-cost", dp.block_cost, "simulated per-block compute, virtual ms");
  dft->add_option("--skew", dft_skews, "extra return latency as leaf:ms, repeatable");
  dft->fallthrough();

  auto* rooms = app.add_subcommand("demo-rooms", "four-room cookie game with conservation checks");
  RoomsDemoParams rp;
  rp.steps = 1000;
  std::string rooms_out;
  rooms->add_option("--steps", rp.steps, "game ticks to run");
  rooms->add_option("--out", rooms_out, "write the JSONL activity log here");
  rooms->add_option("--tick-ms", rp.tick_ms, "game tick length");
  rooms->fallthrough();

  auto* worker = app.add_subcommand("node-worker", "");
  worker->group("");  // internal: spawned by the socket-mode demos
  std::string w_role;
  NodeId w_node = 0, w_parent = 1;
  std::uint16_t w_port = 0;
  bool w_stats = false;
  std::uint64_t w_seed = 0, w_tick = 50;
  worker->add_option("--role", w_role)->required();
  worker->add_option("--node", w_node)->required();
  worker->add_option("--parent-node", w_parent);
  worker->add_option("--parent-port", w_port)->required();
  worker->add_flag("--stats", w_stats);
  worker->add_option("--seed", w_seed);
  worker->add_option("--tick-ms", w_tick);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (val->parsed()) return cmd_validate(val_path);
    if (gr->parsed()) {
      std::optional<std::uint64_t> at;
      if (gr_at_opt->count() > 0) at = gr_at;
      return cmd_graph(g, gr_path, at, gr_out);
    }
    if (sim->parsed()) return cmd_sim(g, sim_path);
    if (dft->parsed()) {
      dp.seed = g.seed;
      auto skews = parse_skews(dft_skews);
      if (!skews) {
        std::cerr << "error: --skew entries must look like leaf:ms\n";
        return kUsage;
      }
      dp.leaf_skew = *skews;
      if (g.transport == "socket") return run_dft_socket(dp, dft_out);
      dp.trace = make_trace(g);
      return finish_dft(dp, run_dft_demo(dp), dft_out);
    }
    if (rooms->parsed()) {
      rp.seed = g.seed;
      if (g.transport == "socket") return run_rooms_socket(rp, rooms_out);
      rp.trace = make_trace(g);
      auto rep = run_rooms_demo(rp);
      if (!rep.error.empty()) {
        std::cerr << "error: " << rep.error << "\n";
        return kCheckFailed;
      }
      if (!rooms_out.empty()) {
        std::ofstream f(rooms_out, std::ios::trunc);
        if (!f) {
          std::cerr << "error: cannot write " << rooms_out << "\n";
          return kUsage;
        }
        for (const auto& line : rep.log_lines) f << line << "\n";
      }
      std::cout << "steps=" << rp.steps << " seed=" << rp.seed << "\n";
      std::cout << "rooms joined: edges=" << rep.square_edges
                << " last join bound " << rep.last_join_bindings << " doors\n";
      std::cout << "final: persons=" << rep.final_persons << " cookies=" << rep.final_cookies
                << "\n";
      if (!rep.ok) {
        std::cout << "CONSERVATION BREACH at tick " << rep.first_bad_tick << "\n";
        return kCheckFailed;
      }
      std::cout << "ok\n";
      return kOk;
    }
    if (worker->parsed()) {
      if (w_role == "dft-leaf") return worker_dft_leaf(w_node, w_parent, w_port, w_stats);
      if (w_role == "room") return worker_room(w_node, w_parent, w_port, w_seed, w_tick);
      std::cerr << "error: unknown worker role " << w_role << "\n";
      return kUsage;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
