#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vfi/config.hpp"
#include "vfi/errors.hpp"
#include "vfi/flow_provider.hpp"
#include "vfi/model.hpp"
#include "vfi/synthetic.hpp"

namespace vfi {

struct IterationLog {
  int64_t iteration = 0;  // 1-based count of completed optimizer steps
  double nll = 0;
  double perceptual = 0;
  double total = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<IterationLog> log;
  std::vector<std::string> checkpoints;
  std::string final_checkpoint;
};

/// Raised when the loss turns non-finite; names the last good checkpoint (may be empty).
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, std::string last_checkpoint)
      : NumericalError(what), last_good(std::move(last_checkpoint)) {}
  std::string last_good;
};

/// Synthetic triplet `index` of the training set described by config.
Triplet training_triplet(const TrainConfig& config, int64_t index);

/// Runs Adam on total_loss. Every batch and noise draw derives from (seed, iteration), so resuming
/// from a checkpoint replays the uninterrupted run exactly. Writes
///   <output_dir>/loss.csv             iteration,nll,perceptual,total,lr (appended)
///   <output_dir>/ckpt_<iteration>.vfi every checkpoint_every steps and at the end
///   <output_dir>/final.vfi            copy of the last checkpoint
TrainResult train_loop(const TrainConfig& config, const FlowProvider& provider,
                       const std::function<void(const IterationLog&)>& on_step = {});

}  // namespace vfi
