#include "idaf/trace.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace idaf {

TraceWriter TraceWriter::to_file(const std::string& path) {
  auto out = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*out) throw std::runtime_error("cannot open trace file: " + path);
  return TraceWriter(out);
}

void TraceWriter::record(std::uint64_t ts, const std::string& ida, const std::string& event,
                         NodeId node, const std::map<std::string, std::string>& details) {
  if (!out_) return;
  nlohmann::ordered_json line;
  line["ts"] = ts;
  line["ida"] = ida;
  line["event"] = event;
  line["node"] = node_name(node);
  nlohmann::ordered_json d = nlohmann::ordered_json::object();
  for (const auto& [k, v] : details) d[k] = v;
  line["details"] = std::move(d);
  *out_ << line.dump() << "\n";
}

void TraceWriter::flush() {
  if (out_) out_->flush();
}

}  // namespace idaf
