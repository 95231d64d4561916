#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udr/model.hpp"
#include "udr/optim.hpp"

namespace udr::train {

// Binary checkpoint, little-endian throughout:
//   magic "UDRM" | version u32 | config_len u32 | config bytes (UTF-8)
//   | record_count u32 | records
// record: name_len u32 | name (UTF-8) | dtype u8 | rank u8 | dims u64[rank]
//   | raw data
// dtype codes: 0 = f32, 1 = f64, 2 = u64.
constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU64 = 2 };

struct CheckpointRecord {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> dims;
  std::vector<char> raw;

  std::uint64_t numel() const;

  template <typename T>
  static CheckpointRecord from_tensor(const std::string& name, const Tensor<T>& t);
  static CheckpointRecord from_u64(const std::string& name, const std::vector<std::uint64_t>& v);

  template <typename T>
  Tensor<T> to_tensor() const;  // requires matching dtype and rank 4
  std::vector<std::uint64_t> to_u64() const;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;  // resolved run configuration echo
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Training-state serialization: parameters by registry name, optimizer
// moments under opt.m.<name> / opt.v.<name>, the step count under opt.step,
// and the position-indexed RNG state [seed, next_step] under rng.state.
template <typename T>
Checkpoint make_training_checkpoint(const model::UDRMixer<T>& model, const AdamState<T>& opt,
                                    std::uint64_t seed, const std::string& config_text);

// Loads parameters (and optimizer state if present) into an existing model.
// Unknown or missing parameter names are errors.
template <typename T>
void apply_training_checkpoint(const Checkpoint& ckpt, model::UDRMixer<T>& model,
                               AdamState<T>* opt, std::uint64_t* seed_out);

}  // namespace udr::train
