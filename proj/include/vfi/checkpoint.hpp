#pragma once

// Checkpoint file format (all integers and floats little-endian):
//
//   bytes 0..7   "VFICKPT\0"
//   u32          format version (1)
//   u32          number of metadata entries, then per entry: string key, string value
//   u32          number of tensors, then per tensor:
//                  string name, u8 dtype (0 = f32, 1 = f64, 2 = i64), u32 rank,
//                  i64 extent per dimension, raw elements in row-major order
//
// Strings are a u32 byte count followed by the bytes. Metadata holds the structural schedule
// (channels, flow_levels, flow_steps, cond_width, coupling_hidden, seed, attention, beta,
// train_alpha) plus the
// training iteration. Tensors are prefixed "model/" (parameters and buffers) or "adam/" (optimizer
// moments and step counts).

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "vfi/model.hpp"

namespace vfi {

inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  int64_t iteration = 0;
  std::map<std::string, std::string> meta;
  std::map<std::string, torch::Tensor> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Snapshot of model state (and optionally Adam state) at `iteration`.
Checkpoint capture(Interpolator& model, const torch::optim::Adam* optimizer, int64_t iteration);

/// Builds a model from the stored schedule and copies every stored parameter and buffer into it.
Interpolator restore_model(const Checkpoint& ckpt);

/// Loads Adam moments and step counts. Returns false when the checkpoint has none.
bool restore_optimizer(const Checkpoint& ckpt, Interpolator& model, torch::optim::Adam& optimizer);

std::string config_to_string(const std::vector<int64_t>& values);
std::vector<int64_t> parse_int_list(const std::string& text);

}  // namespace vfi
