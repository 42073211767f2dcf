#include "brightvae/checkpoint.hpp"

#include <cstdio>
#include <fstream>

namespace brightvae {

namespace {

constexpr char kMagic[8] = {'B', 'V', 'A', 'E', 'C', 'K', 'P', 'T'};

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const uint64_t n = read_u64(is);
  if (n > (1ull << 32)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

void write_tensor_list(std::ostream& os, const std::vector<CheckpointTensor>& list) {
  write_u64(os, list.size());
  for (const auto& t : list) {
    write_string(os, t.name);
    write_string(os, t.dtype);
    write_u64(os, t.shape.size());
    for (int64_t d : t.shape) write_u64(os, static_cast<uint64_t>(d));
    write_u64(os, t.bytes.size());
    os.write(reinterpret_cast<const char*>(t.bytes.data()),
             static_cast<std::streamsize>(t.bytes.size()));
  }
}

std::vector<CheckpointTensor> read_tensor_list(std::istream& is) {
  const uint64_t n = read_u64(is);
  std::vector<CheckpointTensor> list(n);
  for (auto& t : list) {
    t.name = read_string(is);
    t.dtype = read_string(is);
    const uint64_t rank = read_u64(is);
    t.shape.resize(rank);
    for (auto& d : t.shape) d = static_cast<int64_t>(read_u64(is));
    const uint64_t bytes = read_u64(is);
    t.bytes.resize(bytes);
    is.read(reinterpret_cast<char*>(t.bytes.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data for " + t.name);
  }
  return list;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, Checkpoint::kSchemaVersion);
    write_string(os, ckpt.model_config_json);
    write_string(os, ckpt.train_config_json);
    write_u64(os, static_cast<uint64_t>(ckpt.epoch));
    write_u64(os, static_cast<uint64_t>(ckpt.optimizer_step));
    write_u64(os, ckpt.rng_epoch_cursor);
    write_string(os, ckpt.precision);
    write_tensor_list(os, ckpt.params);
    write_tensor_list(os, ckpt.adam_m);
    write_tensor_list(os, ckpt.adam_v);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const uint64_t version = read_u64(is);
  if (version != Checkpoint::kSchemaVersion)
    throw std::runtime_error("unsupported checkpoint schema version " +
                             std::to_string(version));
  Checkpoint ckpt;
  ckpt.model_config_json = read_string(is);
  ckpt.train_config_json = read_string(is);
  ckpt.epoch = static_cast<int64_t>(read_u64(is));
  ckpt.optimizer_step = static_cast<int64_t>(read_u64(is));
  ckpt.rng_epoch_cursor = read_u64(is);
  ckpt.precision = read_string(is);
  ckpt.params = read_tensor_list(is);
  ckpt.adam_m = read_tensor_list(is);
  ckpt.adam_v = read_tensor_list(is);
  return ckpt;
}

}  // namespace brightvae
