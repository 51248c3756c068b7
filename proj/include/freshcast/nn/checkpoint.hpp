#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "freshcast/core/error.hpp"
#include "freshcast/nn/module.hpp"

namespace freshcast::nn {

// Binary tensor container (.fcw):
//   "FCW1" | u32 count | count x { u32 name_len | name | u32 rank | i64 dims[rank] | f32 data[numel] }
// Little-endian host order.
inline constexpr char kCheckpointMagic[4] = {'F', 'C', 'W', '1'};

struct StoredTensor {
  Shape shape;
  std::vector<float> data;
};

using TensorStore = std::map<std::string, StoredTensor>;

namespace detail {

template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V get(std::istream& is, const std::filesystem::path& path) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw CheckpointError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace detail

inline void write_store(const std::filesystem::path& path, const TensorStore& store) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os.write(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put<std::int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("failed writing " + path.string());
}

inline TensorStore read_store(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a tensor checkpoint");
  TensorStore store;
  const auto count = detail::get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated checkpoint " + path.string());
    StoredTensor t;
    const auto rank = detail::get<std::uint32_t>(is, path);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(detail::get<std::int64_t>(is, path));
    t.data.resize(numel(t.shape));
    if (!is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float))))
      throw CheckpointError("truncated checkpoint " + path.string());
    store.emplace(std::move(name), std::move(t));
  }
  return store;
}

template <std::floating_point T>
TensorStore state_of(Module<T>& m, const std::string& prefix = "") {
  TensorStore store;
  auto add = [&](const NamedTensor<T>& nt) {
    const auto& v = nt.tensor->values();
    store[nt.name] = {nt.tensor->shape(), std::vector<float>(v.begin(), v.end())};
  };
  for (const auto& nt : m.named_parameters(prefix)) add(nt);
  for (const auto& nt : m.named_buffers(prefix)) add(nt);
  return store;
}

// Every parameter and buffer of `m` must be present with a matching shape.
template <std::floating_point T>
void load_state(Module<T>& m, const TensorStore& store, const std::string& prefix = "") {
  auto load = [&](const NamedTensor<T>& nt) {
    auto it = store.find(nt.name);
    if (it == store.end()) throw CheckpointError("checkpoint lacks tensor '" + nt.name + "'");
    if (it->second.shape != nt.tensor->shape())
      throw CheckpointError("tensor '" + nt.name + "' has shape " + to_string(it->second.shape) + ", expected " +
                            to_string(nt.tensor->shape()));
    auto dst = nt.tensor->mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.data[i]);
  };
  for (const auto& nt : m.named_parameters(prefix)) load(nt);
  for (const auto& nt : m.named_buffers(prefix)) load(nt);
}

template <std::floating_point T>
void save_module(Module<T>& m, const std::filesystem::path& path) {
  write_store(path, state_of(m));
}

template <std::floating_point T>
void load_module(Module<T>& m, const std::filesystem::path& path) {
  load_state(m, read_store(path));
}

}  // namespace freshcast::nn
