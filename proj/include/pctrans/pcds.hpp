#pragma once
// PCDS point-cloud dataset files and CSV import.
//
// Layout (little endian):
//   "PCDS" | u8 version (=1) | u32 event count
//   per event: u32 point count | u8 D | u8 class label (0xFF = none) |
//              float32 payload, N*D values, row-major
//   trailer:   u32 length | UTF-8 JSON {"domain_label", "norm", "metadata"}
#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pctrans/binary_io.hpp"
#include "pctrans/point_cloud.hpp"

namespace pctrans::data {

inline constexpr std::uint8_t kPcdsVersion = 1;
inline constexpr std::uint8_t kNoClassLabel = 0xFF;

inline std::vector<std::uint8_t> encode_pcds(const Dataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.raw("PCDS");
  w.u8(kPcdsVersion);
  w.u32(static_cast<std::uint32_t>(ds.events.size()));
  for (std::size_t e = 0; e < ds.events.size(); ++e) {
    const auto& cloud = ds.events[e];
    w.u32(static_cast<std::uint32_t>(cloud.size()));
    w.u8(static_cast<std::uint8_t>(cloud.dim()));
    const bool labelled = !ds.class_labels.empty() && ds.class_labels[e].has_value();
    w.u8(labelled ? *ds.class_labels[e] : kNoClassLabel);
    w.f32s(cloud.points().values());
  }
  nlohmann::json trailer = {{"domain_label", ds.domain_label}, {"metadata", ds.metadata}};
  trailer["norm"] = ds.norm ? nlohmann::json(*ds.norm) : nlohmann::json(nullptr);
  const std::string text = trailer.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  return w.bytes();
}

inline Dataset decode_pcds(std::span<const std::uint8_t> bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (r.str(4, "magic") != "PCDS") throw IoError(source + ": not a PCDS file (bad magic)");
  const auto version = r.u8("version byte");
  if (version != kPcdsVersion) {
    throw IoError(source + ": PCDS version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kPcdsVersion) + ")");
  }
  const auto count = r.u32("event count");
  // Each event needs at least its 6-byte header.
  if (static_cast<std::uint64_t>(count) * 6 > r.remaining()) {
    throw IoError(source + ": event count " + std::to_string(count) + " overflows the " +
                  std::to_string(r.remaining()) + " remaining bytes");
  }
  Dataset ds;
  ds.events.reserve(count);
  std::vector<std::optional<std::uint8_t>> labels;
  bool any_label = false;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto n = r.u32("point count");
    const auto dim = r.u8("dimension");
    const auto label = r.u8("class label");
    if (n == 0 || (dim != 3 && dim != 4)) {
      throw IoError(source + ": event " + std::to_string(e) + " has invalid extents " + std::to_string(n) + " x " +
                    std::to_string(dim));
    }
    if (label != kNoClassLabel && label > 1) {
      throw IoError(source + ": event " + std::to_string(e) + " has class label " + std::to_string(label));
    }
    Tensor pts = Tensor::matrix(n, dim);
    r.f32s(pts.values(), "payload of event " + std::to_string(e));
    ds.events.emplace_back(std::move(pts));
    if (label != kNoClassLabel) {
      labels.emplace_back(label);
      any_label = true;
    } else {
      labels.emplace_back(std::nullopt);
    }
  }
  if (any_label) ds.class_labels = std::move(labels);
  const auto len = r.u32("metadata length");
  const std::string text = r.str(len, "metadata");
  if (r.remaining() != 0) throw IoError(source + ": " + std::to_string(r.remaining()) + " trailing bytes");
  try {
    const auto trailer = nlohmann::json::parse(text);
    ds.domain_label = trailer.at("domain_label").get<std::string>();
    ds.metadata = trailer.at("metadata");
    if (!trailer.at("norm").is_null()) ds.norm = trailer.at("norm").get<NormStats>();
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(source + ": malformed metadata block: " + ex.what());
  }
  try {
    ds.validate();
  } catch (const ConfigError& ex) {
    throw IoError(source + ": " + ex.what());
  }
  return ds;
}

inline void save_pc(const std::string& path, const Dataset& ds) { io::write_file(path, encode_pcds(ds)); }

inline Dataset load_pc(const std::string& path) { return decode_pcds(io::read_file(path), path); }

// Detector-event CSV: header `event_id,x,y,z[,charge]`, one row per point.
// Events appear in order of first occurrence of their id.
inline Dataset import_csv(std::istream& in, const std::string& source, const std::string& domain_label = "csv") {
  auto split = [](std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
        field.remove_suffix(1);
      }
      out.push_back(field);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  };

  std::string line;
  if (!std::getline(in, line)) throw IoError(source + ": empty CSV");
  const auto header = split(line);
  const bool with_charge = header.size() == 5 && header[4] == "charge";
  if (!(header.size() == 4 || with_charge) || header[0] != "event_id" || header[1] != "x" || header[2] != "y" ||
      header[3] != "z") {
    throw IoError(source + ": expected header 'event_id,x,y,z[,charge]', got '" + line + "'");
  }
  const std::size_t dim = with_charge ? 4 : 3;

  std::vector<std::string> order;
  std::map<std::string, std::vector<float>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != dim + 1) {
      throw IoError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                    " fields, got " + std::to_string(fields.size()));
    }
    const std::string id(fields[0]);
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    for (std::size_t d = 1; d <= dim; ++d) {
      float v = 0.0f;
      const auto* first = fields[d].data();
      const auto* last = first + fields[d].size();
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        throw IoError(source + ":" + std::to_string(line_no) + ": cannot parse '" + std::string(fields[d]) + "'");
      }
      it->second.push_back(v);
    }
  }
  if (order.empty()) throw IoError(source + ": CSV has no data rows");
  Dataset ds;
  ds.domain_label = domain_label;
  for (const auto& id : order) {
    auto& values = rows.at(id);
    const std::size_t n = values.size() / dim;
    ds.events.emplace_back(Tensor({n, dim}, std::move(values)));
  }
  ds.metadata = {{"source", "csv"}, {"event_ids", order}};
  return ds;
}

inline Dataset import_csv_file(const std::string& path, const std::string& domain_label = "csv") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return import_csv(in, path, domain_label);
}

}  // namespace pctrans::data
