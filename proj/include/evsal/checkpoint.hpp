#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evsal/tape.hpp"
#include "evsal/tensor.hpp"

namespace evsal {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;

  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

// "SESTCKPT", u32 version, then records until end of file:
// u32 name length, name bytes, u32 rank, u64 dims, little-endian f64 values.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::vector<CheckpointRecord>& records,
                     const std::filesystem::path& path);
std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

/// Value records plus AdamW state under ".adam_m", ".adam_v", ".adam_step".
void append_parameter_records(std::vector<CheckpointRecord>& out,
                              const std::vector<Parameter*>& params);

/// Restores values (and optimizer state when present) by name. Every
/// parameter must have a value record of matching shape.
void restore_parameters(const std::vector<CheckpointRecord>& records,
                        const std::vector<Parameter*>& params);

const CheckpointRecord* find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name);

}  // namespace evsal
