#pragma once
// Binary checkpoint format (little-endian):
//
//   "MECC" | u32 version
//   metadata: stage (u32 length + bytes) | u64 step | u64 seed |
//             32-byte config SHA-256 | u64 parameter count
//   per parameter: u32 name length + name | u8 dtype (0 f32, 1 f64) |
//                  u32 rank | u64 dims[rank] | raw values | u8 frozen
//   32-byte SHA-256 of everything above
//
// Loading rejects a wrong magic or version, truncation, trailing bytes and a
// checksum mismatch with CheckpointError.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecc/hash.hpp"
#include "mecc/param.hpp"

namespace mecc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  std::string stage;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  Digest config_hash{};
  bool operator==(const CheckpointMeta&) const = default;
};

struct CheckpointEntry {
  std::string name;
  Tensor value;
  bool frozen = false;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

// Entries of `params` whose name starts with any of `prefixes` (all when
// empty), in registration order.
Checkpoint capture(const ParamSet& params, const CheckpointMeta& meta,
                   const std::vector<std::string>& prefixes = {});

std::vector<std::byte> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::byte> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies every entry's values into the same-named parameter of `params`.
// Freezing is left to the caller. Unknown names or shape/dtype mismatches
// throw CheckpointError.
void apply(const Checkpoint& ckpt, ParamSet& params);

}  // namespace mecc
