#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <ostream>
#include <string>

#include "idaf/ids.hpp"

namespace idaf {

// JSONL lifecycle trace: one object per line with keys in fixed order
// (ts, ida, event, node, details).  Identical runs emit identical bytes.
class TraceWriter {
 public:
  TraceWriter() = default;  // disabled: record() is a no-op
  explicit TraceWriter(std::shared_ptr<std::ostream> out) : out_(std::move(out)) {}
  static TraceWriter to_file(const std::string& path);  // throws on open failure

  bool enabled() const { return out_ != nullptr; }
  void record(std::uint64_t ts, const std::string& ida, const std::string& event, NodeId node,
              const std::map<std::string, std::string>& details = {});
  void flush();

 private:
  std::shared_ptr<std::ostream> out_;
};

}  // namespace idaf
