#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssql/nn.hpp"
#include "ssql/train.hpp"

namespace ssql::ckpt {

// Binary layout, all integers and f32 little-endian:
//   "SSQL"  u16 version
//   u32 len + ModelSpec canonical text
//   u32 tensor count; per tensor: u16 name len + name, u8 trainable,
//     u32 ndim, u32 dims..., f32 data...
//   u32 len + TrainConfig canonical text
//   u64 global step
//   u32 rng stream count; per stream: u16 name len + name, 2 x u64 state
// One weight copy: the tensors ARE the FP parameters, nothing derived is
// persisted. save -> load -> save is byte-identical.
inline constexpr uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    nn::ModelSpec spec;
    nn::ModelParams params;
    train::TrainConfig cfg;
    uint64_t step = 0;
    std::vector<std::pair<std::string, std::array<uint64_t, 2>>> rng_states;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes);

}  // namespace ssql::ckpt
