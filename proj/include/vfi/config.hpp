#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vfi/model.hpp"

namespace vfi {

/// Training configuration. Defaults follow the full-scale recipe (256x256 patches, batch 16,
/// Adam at 5e-4 halved every 20 epochs, mu = 0.2); toy() gives the desk-scale overrides.
///
/// Config files are plain text, one `key = value` per line, '#' starts a comment. Keys are the
/// member names below; `channels` takes a comma-separated list.
struct TrainConfig {
  int64_t size = 256;
  int64_t batch = 16;
  int64_t iterations = 2000;
  double lr = 5e-4;
  int64_t epoch_iterations = 500;
  int64_t halve_every = 20;  // epochs
  double mu = 0.2;
  double alpha = 1e-3;
  double beta = 2.0;
  double tau = 0.3;
  double t = 0.5;
  uint64_t seed = 0;
  uint64_t data_seed = 1000;
  int64_t dataset_size = 2000;
  int64_t checkpoint_every = 500;
  int64_t threads = 1;
  std::vector<int64_t> channels{32, 64, 96};
  int64_t flow_levels = 3;
  int64_t flow_steps = 4;
  int64_t cond_width = 32;
  int64_t coupling_hidden = 64;
  std::string prior = "standard";  // standard | learned
  int64_t base_shift = 0;           // 1: conditional shift of the image before the flow
  std::string output_dir = "run";
  std::string resume;  // checkpoint to continue from, empty for a fresh run

  static TrainConfig toy();

  ModelConfig model_config() const;
  /// lr0 * 0.5^floor(epoch / halve_every), epoch = floor(iteration / epoch_iterations).
  double learning_rate(int64_t iteration) const;
  /// Throws ValidationError naming the offending key.
  void validate() const;

  std::map<std::string, std::string> to_map() const;
};

/// Parses `key = value` text. Unknown keys are reported together, by name, in one
/// ValidationError; malformed values name their key.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = TrainConfig{});
TrainConfig load_train_config(const std::string& path, TrainConfig base = TrainConfig{});
std::string format_train_config(const TrainConfig& config);

}  // namespace vfi
