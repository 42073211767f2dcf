#pragma once

#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "brightvae/tensor.hpp"

namespace brightvae {

/// One serialized tensor: raw native bytes plus a dtype tag so float32 and
/// float64 runs both round-trip bit-exactly.
struct CheckpointTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::string dtype;  // "f32" or "f64"
  std::vector<unsigned char> bytes;

  template <typename T>
  static CheckpointTensor from(const std::string& name, const Tensor<T>& t) {
    CheckpointTensor c;
    c.name = name;
    c.shape = t.shape();
    c.dtype = sizeof(T) == 4 ? "f32" : "f64";
    c.bytes.resize(static_cast<size_t>(t.numel()) * sizeof(T));
    std::memcpy(c.bytes.data(), t.data(), c.bytes.size());
    return c;
  }

  template <typename T>
  Tensor<T> to() const {
    const std::string want = sizeof(T) == 4 ? "f32" : "f64";
    if (dtype != want)
      throw std::runtime_error("checkpoint tensor " + name + " has dtype " + dtype +
                               ", expected " + want);
    Tensor<T> t(shape);
    if (bytes.size() != static_cast<size_t>(t.numel()) * sizeof(T))
      throw std::runtime_error("checkpoint tensor " + name + " has inconsistent size");
    std::memcpy(t.data(), bytes.data(), bytes.size());
    return t;
  }
};

/// Single-file training snapshot: config, parameters, optimizer state and the
/// position in the seeded RNG schedule.
struct Checkpoint {
  static constexpr int kSchemaVersion = 1;

  std::string model_config_json;
  std::string train_config_json;
  int64_t epoch = 0;          // number of completed epochs
  int64_t optimizer_step = 0;
  uint64_t rng_epoch_cursor = 0;  // next epoch index in the seeded shuffle stream
  std::string precision;      // "f32" or "f64"
  std::vector<CheckpointTensor> params;
  std::vector<CheckpointTensor> adam_m;
  std::vector<CheckpointTensor> adam_v;
};

/// Atomic write (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace brightvae
