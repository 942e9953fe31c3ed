#include "vat/nd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace vat::nd {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'T', 'C'};
constexpr uint32_t kVersion = 1;

// This code assumes a little-endian host (the only target platform); the
// static_assert below is a tripwire, not portability support.
static_assert(std::endian::native == std::endian::little,
              "checkpoint container requires a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, store.params().size());
  for (const Param& p : store.params()) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.value.shape.size()));
    for (int d : p.value.shape) write_pod<int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(p.value.data->data()),
              static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  uint32_t version = read_pod<uint32_t>(in, path);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  }
  uint64_t count = read_pod<uint64_t>(in, path);
  if (count != store.params().size()) {
    throw std::runtime_error("checkpoint: " + path + " holds " + std::to_string(count) +
                             " parameters, model has " +
                             std::to_string(store.params().size()));
  }
  std::unordered_set<std::string> seen;
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
    uint32_t rank = read_pod<uint32_t>(in, path);
    std::vector<int> shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = read_pod<int32_t>(in, path);
    Param* p = store.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter '" + name + "' in " + path);
    if (p->value.shape != shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               shape_str(shape) + " vs model " + shape_str(p->value.shape));
    }
    if (!seen.insert(name).second) {
      throw std::runtime_error("checkpoint: duplicate parameter '" + name + "' in " + path);
    }
    in.read(reinterpret_cast<char*>(p->value.data->data()),
            static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated data for '" + name + "'");
  }
}

}  // namespace vat::nd
