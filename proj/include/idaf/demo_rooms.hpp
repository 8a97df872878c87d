#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idaf/trace.hpp"

namespace idaf {

struct RoomsDemoParams {
  std::uint64_t steps{100};
  std::uint64_t seed{0};
  std::uint64_t tick_ms{50};
  TraceWriter trace;  // lifecycle event sink, disabled by default
};

struct RoomsDemoReport {
  bool ok{false};
  std::string error;               // set when the world never got built
  std::uint64_t first_bad_tick{0};  // meaningful when a tick check failed
  std::vector<std::string> log_lines;  // JSONL, one activity event per line
  std::uint32_t final_persons{0};
  std::uint32_t final_cookies{0};
  std::uint32_t square_edges{0};        // live edges once all four rooms joined
  std::uint32_t last_join_bindings{0};  // connections bound by the final joiner
};

// Builds the four-room square world (one person and five pocket cookies per
// room), runs `steps` ticks of autonomous activity, and checks that persons
// and cookies are conserved at every tick.
RoomsDemoReport run_rooms_demo(const RoomsDemoParams& params);

}  // namespace idaf
