#include "idaf/demo_dft.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "idaf/builtin_topologies.hpp"
#include "idaf/runtime.hpp"

namespace idaf {

namespace {

constexpr const char* kIda = "signal-engine";

struct RootShared {
  std::uint32_t total{0};
  std::vector<SampleBlock> results;
  std::set<std::uint32_t> have;
  std::vector<std::uint32_t> assembly_order;
  std::map<std::uint32_t, BlockTiming> timings;
  std::uint64_t started_at{0};
  std::uint64_t completed_at{0};
  std::uint32_t resends{0};
  bool done{false};
  std::string error;
};

class LeafNodelet : public Nodelet {
 public:
  LeafNodelet(bool stats, std::uint64_t cost) : stats_(stats), cost_(cost) {}

  void on_start(const NodeletServices& services) override { services_ = services; }

  void on_message(Port& port, const std::string& payload) override {
    auto decoded = decode_block(payload);
    if (!decoded || decoded->first != BlockKind::task) {
      services_.log("bad_payload", {{"bytes", std::to_string(payload.size())}});
      return;  // the root's resend deadline covers the lost block
    }
    const std::uint64_t start = std::max(services_.now(), busy_until_);
    busy_until_ = start + cost_;
    jobs_.push_back({busy_until_, std::move(decoded->second), &port});
    if (cost_ == 0) on_tick(services_.now());
  }

  void on_tick(std::uint64_t now) override {
    while (!jobs_.empty() && jobs_.front().ready_at <= now) {
      Job job = std::move(jobs_.front());
      jobs_.pop_front();
      if (stats_) {
        SampleBlock res;
        res.seq = job.block.seq;
        res.true_len = job.block.true_len;
        const std::size_t keep = std::min<std::size_t>(job.block.true_len, job.block.real.size());
        if (keep > 0) {
          auto [mean, sd] = mean_std(
              std::vector<double>(job.block.real.begin(), job.block.real.begin() + keep));
          res.real = {mean, sd};
        } else {
          res.real = {0.0, 0.0};
        }
        res.imag = {0.0, 0.0};
        job.port->send(encode_block(BlockKind::stats, res));
      } else {
        job.port->send(encode_block(BlockKind::result, dft(job.block, true)));
      }
    }
  }

 private:
  struct Job {
    std::uint64_t ready_at{0};
    SampleBlock block;
    Port* port{nullptr};
  };

  bool stats_{false};
  std::uint64_t cost_{0};
  std::uint64_t busy_until_{0};
  NodeletServices services_;
  std::deque<Job> jobs_;
};

class RootNodelet : public Nodelet {
 public:
  explicit RootNodelet(std::shared_ptr<RootShared> shared) : shared_(std::move(shared)) {}

  void on_start(const NodeletServices& services) override { services_ = services; }

  // Driver entry, invoked inside a scheduled event once all leaves joined.
  void begin(std::vector<SampleBlock> tasks, std::uint64_t resend_after) {
    resend_after_ = resend_after;
    leaf_ports_.clear();
    for (Port* p : services_.ports())
      if (p->tmpl() == "R_to_L") leaf_ports_.push_back(p);
    std::sort(leaf_ports_.begin(), leaf_ports_.end(),
              [](Port* a, Port* b) { return a->remote() < b->remote(); });
    if (leaf_ports_.empty()) {
      shared_->error = "no leaves connected";
      shared_->done = true;
      return;
    }
    shared_->total = static_cast<std::uint32_t>(tasks.size());
    shared_->started_at = services_.now();
    tasks_.clear();
    for (auto& t : tasks) {
      const std::uint32_t seq = t.seq;
      tasks_[seq] = std::move(t);
      dispatch_block(seq, seq % leaf_ports_.size(), true);
    }
  }

  void on_message(Port& port, const std::string& payload) override {
    auto decoded = decode_block(payload);
    if (!decoded || decoded->first == BlockKind::task) {
      services_.log("bad_payload", {{"bytes", std::to_string(payload.size())}});
      return;
    }
    SampleBlock res = std::move(decoded->second);
    if (shared_->done || shared_->have.count(res.seq)) return;  // late duplicate
    shared_->have.insert(res.seq);
    shared_->assembly_order.push_back(res.seq);
    BlockTiming t;
    t.seq = res.seq;
    t.node = port.remote();
    t.sent_at = first_sent_[res.seq];
    t.done_at = services_.now();
    shared_->timings[res.seq] = t;
    shared_->results.push_back(std::move(res));
    if (shared_->have.size() == shared_->total) {
      shared_->completed_at = services_.now();
      shared_->done = true;
    }
  }

  void on_tick(std::uint64_t now) override {
    if (shared_->done || leaf_ports_.empty()) return;
    for (const auto& [seq, task] : tasks_) {
      if (shared_->have.count(seq)) continue;
      if (now < last_sent_[seq] + resend_after_) continue;
      const std::size_t next = (seq + ++send_shift_[seq]) % leaf_ports_.size();
      dispatch_block(seq, next, false);
      ++shared_->resends;
    }
  }

 private:
  void dispatch_block(std::uint32_t seq, std::size_t leaf, bool first) {
    Port* p = leaf_ports_[leaf];
    p->send(encode_block(BlockKind::task, tasks_.at(seq)));
    last_sent_[seq] = services_.now();
    if (first) first_sent_[seq] = services_.now();
  }

  std::shared_ptr<RootShared> shared_;
  NodeletServices services_;
  std::vector<Port*> leaf_ports_;
  std::map<std::uint32_t, SampleBlock> tasks_;
  std::map<std::uint32_t, std::uint64_t> first_sent_;
  std::map<std::uint32_t, std::uint64_t> last_sent_;
  std::map<std::uint32_t, std::uint32_t> send_shift_;
  std::uint64_t resend_after_{5000};
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

}  // namespace

std::vector<double> demo_noise(std::uint32_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xD1F7A5C3ULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

void serial_pipeline(const DftDemoParams& params, const std::vector<double>& real,
                     const std::vector<double>& imag, std::vector<double>& out_real,
                     std::vector<double>& out_imag,
                     std::vector<std::pair<double, double>>& stats) {
  out_real.clear();
  out_imag.clear();
  stats.clear();
  std::vector<SampleBlock> processed;
  for (auto& blk : split_blocks(real, imag, params.blocks)) {
    if (params.stats) {
      const std::size_t keep = std::min<std::size_t>(blk.true_len, blk.real.size());
      if (keep > 0) {
        stats.push_back(
            mean_std(std::vector<double>(blk.real.begin(), blk.real.begin() + keep)));
      } else {
        stats.emplace_back(0.0, 0.0);
      }
    } else {
      processed.push_back(dft(blk, true));
    }
  }
  if (!params.stats) assemble(std::move(processed), out_real, out_imag);
}

DftDemoReport run_dft_demo(const DftDemoParams& params) {
  DftDemoReport rep;
  if (params.leaves < 1) {
    rep.error = "leaves must be at least 1";
    return rep;
  }
  if (params.blocks < 1 || params.samples < 1) {
    rep.error = "blocks and samples must be positive";
    return rep;
  }

  std::vector<double> in_real = params.input_real;
  std::vector<double> in_imag = params.input_imag;
  if (in_real.empty()) {
    in_real = demo_noise(params.blocks * params.samples, params.seed);
    in_imag.assign(in_real.size(), 0.0);
  }
  if (in_imag.size() != in_real.size()) in_imag.assign(in_real.size(), 0.0);

  TopologySpec spec = star();
  ClusterParams cp;
  cp.sim.seed = params.seed;
  cp.tick_ms = params.tick_ms;
  SimCluster cluster(cp);
  cluster.set_trace(params.trace);

  auto shared = std::make_shared<RootShared>();
  Advertisement adv;
  adv.kind = "ida";
  adv.name = kIda;
  adv.id = std::string("ida/") + kIda;
  adv.attributes = {{"mode", params.stats ? "stats" : "dft"}};
  adv.spec_ref = spec.name;

  Nodeletset set;
  set.factories["root"] = [shared] { return std::make_unique<RootNodelet>(shared); };
  const bool stats = params.stats;
  const std::uint64_t cost = params.block_cost;
  set.factories["leaf"] = [stats, cost] { return std::make_unique<LeafNodelet>(stats, cost); };

  const NodeId root_id = 1;
  for (NodeId n = root_id; n <= root_id + params.leaves; ++n) cluster.add_node(n);
  cluster.register_everywhere(adv, spec, set);
  for (const auto& [leaf, extra] : params.leaf_skew)
    cluster.world().set_extra_latency(root_id + 1 + leaf, extra);

  for (NodeId n = root_id; n <= root_id + params.leaves; ++n) {
    cluster.container(n)->participate(kIda);
    if (!wait_member(cluster, n)) {
      rep.error = "join failed for " + node_name(n);
      return rep;
    }
  }

  cluster.start_ticks();
  auto tasks = split_blocks(in_real, in_imag, params.blocks);
  SimWorld& world = cluster.world();
  world.schedule(world.now() + params.tick_ms, [&cluster, tasks, &params] {
    auto* ctx = cluster.container(1)->context(kIda);
    auto* root = ctx ? dynamic_cast<RootNodelet*>(ctx->nodelet()) : nullptr;
    if (root) root->begin(tasks, params.resend_after);
  });

  const std::uint64_t budget =
      world.now() +
      static_cast<std::uint64_t>(params.blocks) * (params.block_cost + params.resend_after) +
      600000;
  while (!shared->done && world.now() < budget) world.run_until(world.now() + 100);
  cluster.stop_ticks();

  if (!shared->done) {
    rep.error = "pipeline incomplete after " + std::to_string(world.now()) + "ms";
    return rep;
  }
  if (!shared->error.empty()) {
    rep.error = shared->error;
    return rep;
  }

  rep.assembly_order = shared->assembly_order;
  rep.started_at = shared->started_at;
  rep.completed_at = shared->completed_at;
  rep.resends = shared->resends;
  for (const auto& [seq, t] : shared->timings) rep.timings.push_back(t);

  std::vector<std::pair<double, double>> oracle_stats;
  std::vector<double> oracle_real, oracle_imag;
  serial_pipeline(params, in_real, in_imag, oracle_real, oracle_imag, oracle_stats);

  double err = 0.0;
  if (params.stats) {
    std::sort(shared->results.begin(), shared->results.end(),
              [](const SampleBlock& a, const SampleBlock& b) { return a.seq < b.seq; });
    for (const auto& res : shared->results)
      rep.block_stats.emplace_back(res.real.size() > 0 ? res.real[0] : 0.0,
                                   res.real.size() > 1 ? res.real[1] : 0.0);
    if (rep.block_stats.size() != oracle_stats.size()) {
      rep.error = "stats count mismatch";
      return rep;
    }
    for (std::size_t i = 0; i < oracle_stats.size(); ++i) {
      err = std::max(err, std::abs(rep.block_stats[i].first - oracle_stats[i].first));
      err = std::max(err, std::abs(rep.block_stats[i].second - oracle_stats[i].second));
    }
  } else {
    assemble(shared->results, rep.out_real, rep.out_imag);
    if (rep.out_real.size() != oracle_real.size()) {
      rep.error = "output length mismatch";
      return rep;
    }
    for (std::size_t i = 0; i < oracle_real.size(); ++i) {
      err = std::max(err, std::abs(rep.out_real[i] - oracle_real[i]));
      err = std::max(err, std::abs(rep.out_imag[i] - oracle_imag[i]));
    }
  }
  rep.max_error = err;
  rep.ok = err <= 1e-9;
  return rep;
}

}  // namespace idaf
