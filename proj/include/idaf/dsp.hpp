#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace idaf {

// One unit of signal work.  real and imag always have equal length; when a
// signal does not divide evenly the tail block is zero-padded and true_len
// remembers how many samples are data.
struct SampleBlock {
  std::uint32_t seq{0};
  std::uint32_t true_len{0};
  std::vector<double> real;
  std::vector<double> imag;
};

// Transform with the positive-exponent kernel: per output bin i,
// arg = direction * 2*pi*i / N and X[i] = sum_k x[k] * (cos(k*arg) + j sin(k*arg)).
// forward uses direction +1 and divides every output by N; inverse uses
// direction -1 unscaled, so forward-then-inverse is the identity.
SampleBlock dft(const SampleBlock& block, bool forward);

// Population form: divisor N in both the mean and the variance.
std::pair<double, double> mean_std(const std::vector<double>& samples);

// Cuts a signal into `count` equal blocks, zero-padding the last one.
std::vector<SampleBlock> split_blocks(const std::vector<double>& real,
                                      const std::vector<double>& imag, std::uint32_t count);

// Concatenates blocks in seq order, trimming each to its true_len.
void assemble(std::vector<SampleBlock> blocks, std::vector<double>& real,
              std::vector<double>& imag);

enum class BlockKind : std::uint8_t { task = 0, result = 1, stats = 2 };

// Little-endian binary frame: [u8 kind][u32 seq][u32 true_len][u32 n]
// [n f64 real][n f64 imag].  A stats frame carries n = 2, real = {mean, std}.
std::string encode_block(BlockKind kind, const SampleBlock& block);
std::optional<std::pair<BlockKind, SampleBlock>> decode_block(const std::string& payload);

// Headerless signal text: one "real imag" pair per line, full precision.
void write_signal(const std::string& path, const std::vector<double>& real,
                  const std::vector<double>& imag);
// Throws on an unreadable or ill-formed file.
std::pair<std::vector<double>, std::vector<double>> read_signal(const std::string& path);

// Real signal of length n: sum of unit-amplitude sines, one cycle count each.
std::vector<double> sine_mix(std::uint32_t n, const std::vector<std::uint32_t>& bins);

}  // namespace idaf
