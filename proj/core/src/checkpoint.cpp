#include "eisderm/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace eisderm {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ContractError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("checkpoint: cannot open " + path);
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kVersion);
  write_pod<uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    write_pod<uint32_t>(os, (uint32_t)e.name.size());
    os.write(e.name.data(), (std::streamsize)e.name.size());
    write_pod<uint32_t>(os, (uint32_t)e.shape.size());
    for (size_t d : e.shape) write_pod<uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(e.data.data()),
             (std::streamsize)(e.data.size() * sizeof(double)));
  }
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4))
    throw ContractError("checkpoint: bad magic in " + path);
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw ContractError("checkpoint: unsupported version " +
                        std::to_string(version));
  uint64_t count = read_pod<uint64_t>(is);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    uint32_t nlen = read_pod<uint32_t>(is);
    e.name.resize(nlen);
    is.read(e.name.data(), nlen);
    uint32_t rank = read_pod<uint32_t>(is);
    e.shape.resize(rank);
    size_t n = 1;
    for (auto& d : e.shape) {
      d = (size_t)read_pod<uint64_t>(is);
      n *= d;
    }
    e.data.resize(n);
    is.read(reinterpret_cast<char*>(e.data.data()),
            (std::streamsize)(n * sizeof(double)));
    if (!is) throw ContractError("checkpoint: truncated payload in " + path);
  }
  return entries;
}

void save_params(const std::string& path, const nn::ParamMap& pm) {
  std::vector<CheckpointEntry> entries;
  for (const auto& [name, t] : pm.tensors)
    entries.push_back({name, t.shape(), t.data()});
  for (const auto& [name, buf] : pm.buffers)
    entries.push_back({name, {buf->size()}, *buf});
  save_checkpoint(path, entries);
}

void load_params(const std::string& path, nn::ParamMap& pm) {
  auto entries = load_checkpoint(path);
  auto find = [&](const std::string& name) -> const CheckpointEntry& {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw ContractError("checkpoint: missing entry '" + name + "' in " + path);
  };
  for (auto& [name, t] : pm.tensors) {
    const auto& e = find(name);
    if (e.data.size() != t.size())
      throw DimensionError("checkpoint: size mismatch for '" + name + "'");
    t.data() = e.data;
  }
  for (auto& [name, buf] : pm.buffers) {
    const auto& e = find(name);
    if (e.data.size() != buf->size())
      throw DimensionError("checkpoint: size mismatch for '" + name + "'");
    *buf = e.data;
  }
}

}  // namespace eisderm
