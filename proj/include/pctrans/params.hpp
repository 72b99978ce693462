#pragma once

#include <map>
#include <string>
#include <vector>

#include "pctrans/binary_io.hpp"
#include "pctrans/errors.hpp"
#include "pctrans/tensor.hpp"

namespace pctrans::numerics {

// Named trainable tensors plus same-shaped gradient slots. std::map keeps the
// iteration order sorted by name.
class ParamStore {
  template <typename Map>
  static auto& lookup(Map& map, const std::string& name) {
    auto it = map.find(name);
    if (it == map.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

 public:
  void add(const std::string& name, Tensor value) {
    if (values_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
    grads_.emplace(name, Tensor(value.shape()));
    values_.emplace(name, std::move(value));
  }

  bool contains(const std::string& name) const { return values_.contains(name); }
  std::size_t size() const { return values_.size(); }

  const Tensor& value(const std::string& name) const { return lookup(values_, name); }
  Tensor& value(const std::string& name) { return lookup(values_, name); }
  const Tensor& grad(const std::string& name) const { return lookup(grads_, name); }
  Tensor& grad(const std::string& name) { return lookup(grads_, name); }

  const std::map<std::string, Tensor>& values() const { return values_; }
  std::map<std::string, Tensor>& values() { return values_; }

  void zero_grad() {
    for (auto& [name, g] : grads_) g.fill(0.0f);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : values_) n += v.size();
    return n;
  }

  // Values only; gradients are not part of equality.
  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.values_ == b.values_; }

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

// Checkpoint container:
//   u8 version | u32 count | count x (u32 name_len | name | u8 rank |
//   rank x u32 extent | float32 LE payload)
inline constexpr std::uint8_t kContainerVersion = 1;

inline std::vector<std::uint8_t> encode_container(const std::map<std::string, Tensor>& tensors) {
  io::ByteWriter w;
  w.u8(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f32s(t.values());
  }
  return w.bytes();
}

inline std::map<std::string, Tensor> decode_container(std::span<const std::uint8_t> bytes,
                                                      const std::string& source) {
  io::ByteReader r(bytes, source);
  const auto version = r.u8("version byte");
  if (version != kContainerVersion) {
    throw IoError(source + ": container version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kContainerVersion) + ")");
  }
  const auto count = r.u32("tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.u32("name length");
    std::string name = r.str(name_len, "tensor name");
    const auto rank = r.u8("rank");
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      e = r.u32("extent");
      n *= e;
      if (n > r.remaining() / 4 + 1) {
        throw IoError(source + ": extents of '" + name + "' overflow the remaining " +
                      std::to_string(r.remaining()) + " bytes");
      }
    }
    Tensor t(shape);
    r.f32s(t.values(), "payload of '" + name + "'");
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw IoError(source + ": duplicate tensor name in container");
    }
  }
  if (r.remaining() != 0) {
    throw IoError(source + ": " + std::to_string(r.remaining()) + " trailing bytes after container");
  }
  return out;
}

inline void save_params(const std::string& path, const ParamStore& params) {
  io::write_file(path, encode_container(params.values()));
}

inline ParamStore load_params(const std::string& path) {
  ParamStore store;
  for (auto& [name, t] : decode_container(io::read_file(path), path)) store.add(name, std::move(t));
  return store;
}

}  // namespace pctrans::numerics
