#pragma once

#include <string>

#include <torch/torch.h>

namespace vfi {

struct FlowPair {
  torch::Tensor flow01;
  torch::Tensor flow10;
};

/// Two frames plus whatever ground truth came with them.
struct FramePair {
  torch::Tensor frame0;
  torch::Tensor frame1;
  std::string id;             // substituted for "{id}" in file templates
  torch::Tensor true_flow01;  // analytic flows, only for synthetic frames
  torch::Tensor true_flow10;
};

/// Source of bidirectional flows. There is no built-in motion estimator: synthetic frames carry
/// their exact flows, real frames need sidecar Middlebury .flo files. Returned flows are detached.
class FlowProvider {
 public:
  enum class Mode { Synthetic, File };

  static FlowProvider synthetic();
  /// Paths may contain "{id}", replaced by FramePair::id.
  static FlowProvider files(std::string flow01_template, std::string flow10_template);

  /// Throws ValidationError (synthetic mode without ground truth), IoError (missing file),
  /// FormatError (bad file) or DimensionError (flow size differs from the frames).
  FlowPair provide(const FramePair& frames) const;

  Mode mode() const { return mode_; }

 private:
  Mode mode_ = Mode::Synthetic;
  std::string flow01_template_;
  std::string flow10_template_;
};

}  // namespace vfi
