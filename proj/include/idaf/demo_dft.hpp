#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "idaf/dsp.hpp"
#include "idaf/trace.hpp"

namespace idaf {

struct DftDemoParams {
  std::uint32_t leaves{3};
  std::uint32_t blocks{8};
  std::uint32_t samples{256};  // per block
  bool stats{false};
  std::uint64_t seed{0};
  // Virtual milliseconds of simulated compute a leaf spends per block.
  std::uint64_t block_cost{0};
  // Extra transport latency per leaf index, to skew return order.
  std::map<std::uint32_t, std::uint64_t> leaf_skew;
  // Empty = seeded noise of blocks*samples points.
  std::vector<double> input_real;
  std::vector<double> input_imag;
  // A block outstanding this long is re-sent to the next leaf.
  std::uint64_t resend_after{5000};
  std::uint64_t tick_ms{10};
  TraceWriter trace;  // lifecycle event sink, disabled by default
};

struct BlockTiming {
  std::uint32_t seq{0};
  std::uint64_t node{0};    // leaf that produced the accepted result
  std::uint64_t sent_at{0};
  std::uint64_t done_at{0};
};

struct DftDemoReport {
  bool ok{false};
  std::string error;  // set when the pipeline never ran to completion
  double max_error{0.0};
  std::vector<double> out_real;
  std::vector<double> out_imag;
  std::vector<std::pair<double, double>> block_stats;  // stats mode, seq order
  std::vector<std::uint32_t> assembly_order;           // seq by arrival
  std::vector<BlockTiming> timings;                    // seq order
  std::uint64_t started_at{0};
  std::uint64_t completed_at{0};
  std::uint32_t resends{0};
};

// Spins up one root plus `leaves` leaf nodes over the simulated transport,
// distributes blocks round robin, and checks the reassembled result against
// the serial block-wise computation.
DftDemoReport run_dft_demo(const DftDemoParams& params);

// The serial oracle the distributed run must match.
void serial_pipeline(const DftDemoParams& params, const std::vector<double>& real,
                     const std::vector<double>& imag, std::vector<double>& out_real,
                     std::vector<double>& out_imag,
                     std::vector<std::pair<double, double>>& stats);

// Deterministic noise input used when the caller supplies no signal.
std::vector<double> demo_noise(std::uint32_t n, std::uint64_t seed);

}  // namespace idaf
