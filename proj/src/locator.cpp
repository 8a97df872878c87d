#include "idaf/locator.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <map>
#include <stdexcept>

#include "idaf/topology.hpp"

namespace idaf {

Coordinates add(const Coordinates& a, const Coordinates& b) {
  if (a.size() != b.size()) throw std::invalid_argument("coordinate dimension mismatch");
  Coordinates out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Coordinates negate(const Coordinates& a) {
  Coordinates out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
  return out;
}

const Coordinates* Locator::step(const std::string& direction) const {
  for (const auto& [d, c] : directions)
    if (d == direction) return &c;
  return nullptr;
}

Address add(const Address& a, const Address& b) {
  return Address{add(a.offset, b.offset), b.target_connection};
}

Address inverse(const TopologySpec& spec, const Address& a) {
  return Address{negate(a.offset), reciprocal(spec, a.target_connection).name};
}

Address contingent_address(const Locator& locator, const TopologySpec& spec,
                           const std::string& via, const std::string& want) {
  if (via == want) throw std::invalid_argument("via and want must differ");
  const TopologyConnection* cv = spec.find_connection(via);
  const TopologyConnection* cw = spec.find_connection(want);
  if (!cv || !cw) throw std::invalid_argument("unknown connection");
  if (!cv->group || !cw->group || *cv->group != *cw->group)
    throw std::invalid_argument("connections not in one contingent group");
  const ContingentGroup* g = spec.find_group(*cv->group);
  if (!g || !g->rigid) throw std::invalid_argument("contingent group not rigid");
  if (!cv->direction || !cw->direction)
    throw std::invalid_argument("group member without direction");
  const Coordinates* sv = locator.step(*cv->direction);
  const Coordinates* sw = locator.step(*cw->direction);
  if (!sv || !sw) throw std::invalid_argument("direction missing from locator");
  return Address{add(*sw, negate(*sv)), reciprocal(spec, want).name};
}

namespace {

bool is_zero(const Coordinates& c) {
  return std::all_of(c.begin(), c.end(), [](std::int64_t v) { return v == 0; });
}

// Minimal decomposition of offset into unit steps, found by breadth-first
// search over the lattice region spanned by origin and offset (plus one cell
// of slack, enough for diagonal unit steps).  Returns step counts per
// direction index, or empty if the offset is not reachable.
std::map<std::size_t, std::uint32_t> decompose(const Locator& locator,
                                               const Coordinates& offset) {
  std::map<std::size_t, std::uint32_t> counts;
  if (is_zero(offset)) return counts;

  const std::size_t dim = offset.size();
  Coordinates lo(dim), hi(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    lo[i] = std::min<std::int64_t>(0, offset[i]) - 1;
    hi[i] = std::max<std::int64_t>(0, offset[i]) + 1;
  }
  auto in_box = [&](const Coordinates& c) {
    for (std::size_t i = 0; i < dim; ++i)
      if (c[i] < lo[i] || c[i] > hi[i]) return false;
    return true;
  };

  std::map<Coordinates, std::pair<Coordinates, std::size_t>> parent;  // pos -> (prev, dir)
  std::deque<Coordinates> frontier;
  Coordinates origin(dim, 0);
  parent.emplace(origin, std::make_pair(origin, SIZE_MAX));
  frontier.push_back(origin);

  while (!frontier.empty()) {
    Coordinates cur = frontier.front();
    frontier.pop_front();
    if (cur == offset) break;
    for (std::size_t di = 0; di < locator.directions.size(); ++di) {
      Coordinates next = add(cur, locator.directions[di].second);
      if (!in_box(next) || parent.count(next)) continue;
      parent.emplace(next, std::make_pair(cur, di));
      frontier.push_back(next);
    }
  }

  auto it = parent.find(offset);
  if (it == parent.end()) return counts;
  Coordinates cur = offset;
  while (cur != Coordinates(dim, 0)) {
    const auto& [prev, di] = parent.at(cur);
    ++counts[di];
    cur = prev;
  }
  return counts;
}

std::optional<NodeId> walk(const Locator& locator, NodeId origin,
                           const std::vector<std::size_t>& order,
                           const std::map<std::size_t, std::uint32_t>& counts,
                           const NeighborFn& view) {
  NodeId at = origin;
  for (std::size_t di : order) {
    const std::string& token = locator.directions[di].first;
    for (std::uint32_t i = 0; i < counts.at(di); ++i) {
      std::optional<NodeId> next = view(at, token);
      if (!next) return std::nullopt;
      at = *next;
    }
  }
  return at;
}

}  // namespace

std::optional<NodeId> resolve(const Locator& locator, NodeId origin, const Address& addr,
                              const NeighborFn& view) {
  if (addr.offset.size() != locator.dimension)
    throw std::invalid_argument("address dimension mismatch");
  if (is_zero(addr.offset)) return origin;

  auto counts = decompose(locator, addr.offset);
  if (counts.empty()) return std::nullopt;

  std::vector<std::size_t> axes;
  for (const auto& [di, n] : counts) axes.push_back(di);
  std::sort(axes.begin(), axes.end());

  // Try every axis order, lowest declaration order first.
  do {
    if (auto hit = walk(locator, origin, axes, counts, view)) return hit;
  } while (std::next_permutation(axes.begin(), axes.end()));
  return std::nullopt;
}

}  // namespace idaf
