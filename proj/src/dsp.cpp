#include "idaf/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace idaf {

SampleBlock dft(const SampleBlock& block, bool forward) {
  if (block.real.size() != block.imag.size())
    throw std::invalid_argument("real and imag lengths differ");
  const std::size_t n = block.real.size();
  if (n == 0) throw std::invalid_argument("empty block");

  SampleBlock out;
  out.seq = block.seq;
  out.true_len = block.true_len;
  out.real.resize(n);
  out.imag.resize(n);

  const double direction = forward ? 1.0 : -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double arg = direction * 2.0 * std::numbers::pi * static_cast<double>(i) /
                       static_cast<double>(n);
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double c = std::cos(static_cast<double>(k) * arg);
      const double s = std::sin(static_cast<double>(k) * arg);
      re += block.real[k] * c - block.imag[k] * s;
      im += block.real[k] * s + block.imag[k] * c;
    }
    out.real[i] = re;
    out.imag[i] = im;
  }
  if (forward) {
    for (std::size_t i = 0; i < n; ++i) {
      out.real[i] /= static_cast<double>(n);
      out.imag[i] /= static_cast<double>(n);
    }
  }
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("empty sample vector");
  const double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double mean = sum / n;
  double acc = 0.0;
  for (double x : samples) acc += (x - mean) * (x - mean);
  return {mean, std::sqrt(acc / n)};
}

std::vector<SampleBlock> split_blocks(const std::vector<double>& real,
                                      const std::vector<double>& imag, std::uint32_t count) {
  if (real.size() != imag.size()) throw std::invalid_argument("real and imag lengths differ");
  if (count == 0) throw std::invalid_argument("block count must be positive");
  if (real.empty()) throw std::invalid_argument("empty signal");

  const std::size_t total = real.size();
  const std::size_t per = (total + count - 1) / count;
  std::vector<SampleBlock> blocks;
  for (std::uint32_t b = 0; b < count; ++b) {
    SampleBlock blk;
    blk.seq = b;
    const std::size_t begin = static_cast<std::size_t>(b) * per;
    const std::size_t end = std::min(begin + per, total);
    blk.true_len = begin < end ? static_cast<std::uint32_t>(end - begin) : 0;
    blk.real.assign(per, 0.0);
    blk.imag.assign(per, 0.0);
    for (std::size_t k = begin; k < end; ++k) {
      blk.real[k - begin] = real[k];
      blk.imag[k - begin] = imag[k];
    }
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

void assemble(std::vector<SampleBlock> blocks, std::vector<double>& real,
              std::vector<double>& imag) {
  std::sort(blocks.begin(), blocks.end(),
            [](const SampleBlock& a, const SampleBlock& b) { return a.seq < b.seq; });
  real.clear();
  imag.clear();
  for (const auto& blk : blocks) {
    const std::size_t keep = std::min<std::size_t>(blk.true_len, blk.real.size());
    real.insert(real.end(), blk.real.begin(), blk.real.begin() + keep);
    imag.insert(imag.end(), blk.imag.begin(), blk.imag.begin() + keep);
  }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

std::string encode_block(BlockKind kind, const SampleBlock& block) {
  if (block.real.size() != block.imag.size())
    throw std::invalid_argument("real and imag lengths differ");
  std::string out;
  out.reserve(13 + 16 * block.real.size());
  out += static_cast<char>(kind);
  put_u32(out, block.seq);
  put_u32(out, block.true_len);
  put_u32(out, static_cast<std::uint32_t>(block.real.size()));
  for (double v : block.real) put_f64(out, v);
  for (double v : block.imag) put_f64(out, v);
  return out;
}

std::optional<std::pair<BlockKind, SampleBlock>> decode_block(const std::string& payload) {
  if (payload.size() < 13) return std::nullopt;
  const std::uint8_t kind = static_cast<std::uint8_t>(payload[0]);
  if (kind > 2) return std::nullopt;
  SampleBlock blk;
  blk.seq = get_u32(payload, 1);
  blk.true_len = get_u32(payload, 5);
  const std::uint32_t n = get_u32(payload, 9);
  if (payload.size() != 13 + 16ull * n) return std::nullopt;
  blk.real.resize(n);
  blk.imag.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) blk.real[i] = get_f64(payload, 13 + 8ull * i);
  for (std::uint32_t i = 0; i < n; ++i)
    blk.imag[i] = get_f64(payload, 13 + 8ull * (n + i));
  return std::make_pair(static_cast<BlockKind>(kind), std::move(blk));
}

void write_signal(const std::string& path, const std::vector<double>& real,
                  const std::vector<double>& imag) {
  if (real.size() != imag.size()) throw std::invalid_argument("real and imag lengths differ");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open signal file: " + path);
  f.precision(17);
  for (std::size_t i = 0; i < real.size(); ++i) f << real[i] << " " << imag[i] << "\n";
}

std::pair<std::vector<double>, std::vector<double>> read_signal(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open signal file: " + path);
  std::vector<double> real, imag;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double re, im;
    if (!(ss >> re >> im))
      throw std::runtime_error("bad signal line " + std::to_string(lineno) + " in " + path);
    real.push_back(re);
    imag.push_back(im);
  }
  return {std::move(real), std::move(imag)};
}

std::vector<double> sine_mix(std::uint32_t n, const std::vector<std::uint32_t>& bins) {
  std::vector<double> out(n, 0.0);
  for (std::uint32_t k = 0; k < n; ++k)
    for (std::uint32_t b : bins)
      out[k] += std::sin(2.0 * std::numbers::pi * static_cast<double>(b) *
                         static_cast<double>(k) / static_cast<double>(n));
  return out;
}

}  // namespace idaf
