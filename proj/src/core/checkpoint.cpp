#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace aid {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'I', 'D', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t get_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

template <typename Real>
constexpr uint8_t dtype_tag() {
  return std::is_same_v<Real, float> ? 0 : 1;
}

}  // namespace

template <typename Real>
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor<Real>>>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  AID_CHECK(out.good(), "checkpoint: cannot open for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    uint8_t dt = dtype_tag<Real>();
    uint8_t rank = static_cast<uint8_t>(t.rank());
    out.write(reinterpret_cast<const char*>(&dt), 1);
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (int64_t d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(Real)));
  }
  AID_CHECK(out.good(), "checkpoint: write failed: " + path);
}

std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  AID_CHECK(in.good(), "checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  AID_CHECK(in.good() && std::memcmp(magic, kMagic, sizeof kMagic) == 0,
            "checkpoint: bad magic in " + path);
  uint32_t version = get_u32(in);
  AID_CHECK(version == kCheckpointVersion,
            "checkpoint: unsupported format version " + std::to_string(version));
  uint32_t count = get_u32(in);
  std::map<std::string, CheckpointEntry> out;
  for (uint32_t e = 0; e < count; ++e) {
    uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint8_t dt = 0, rank = 0;
    in.read(reinterpret_cast<char*>(&dt), 1);
    in.read(reinterpret_cast<char*>(&rank), 1);
    CheckpointEntry entry;
    entry.dtype = dt;
    int64_t n = 1;
    for (uint8_t i = 0; i < rank; ++i) {
      int64_t d = get_u32(in);
      entry.shape.push_back(d);
      n *= d;
    }
    entry.data.resize(static_cast<size_t>(n));
    if (dt == 0) {
      std::vector<float> buf(static_cast<size_t>(n));
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      for (size_t i = 0; i < buf.size(); ++i) entry.data[i] = buf[i];
    } else {
      in.read(reinterpret_cast<char*>(entry.data.data()),
              static_cast<std::streamsize>(entry.data.size() * sizeof(double)));
    }
    AID_CHECK(in.good(), "checkpoint: truncated file " + path);
    out.emplace(std::move(name), std::move(entry));
  }
  return out;
}

template <typename Real>
void restore_params(const std::map<std::string, CheckpointEntry>& ckpt,
                    std::vector<std::pair<std::string, Tensor<Real>>>& params) {
  for (auto& [name, t] : params) {
    auto it = ckpt.find(name);
    AID_CHECK(it != ckpt.end(), "checkpoint: missing entry '" + name + "'");
    AID_CHECK(it->second.shape == t.shape(),
              "checkpoint: shape mismatch for '" + name + "': file " +
                  shape_str(it->second.shape) + " vs model " + shape_str(t.shape()));
    auto dst = t.raw_data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(it->second.data[i]);
  }
}

template void save_checkpoint(const std::string&,
                              const std::vector<std::pair<std::string, Tensor<float>>>&);
template void save_checkpoint(const std::string&,
                              const std::vector<std::pair<std::string, Tensor<double>>>&);
template void restore_params(const std::map<std::string, CheckpointEntry>&,
                             std::vector<std::pair<std::string, Tensor<float>>>&);
template void restore_params(const std::map<std::string, CheckpointEntry>&,
                             std::vector<std::pair<std::string, Tensor<double>>>&);

}  // namespace aid
