#pragma once

// Procedural training triplets with exact motion. Textured rigid shapes translate and rotate over a
// textured background that may itself translate; the middle frame is rendered at the true
// intermediate pose and both flows are the analytic displacement fields of the scene.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace vfi {

struct MotionSpec {
  enum class Kind {
    Random,       // independent random motion of background and shapes
    Still,        // nothing moves
    Translation,  // the whole scene moves by (dx, dy)
  };
  Kind kind = Kind::Random;
  double dx = 0.0;
  double dy = 0.0;
  double t = 0.5;
  // Ranges for Kind::Random, in pixels at 64x64 (scaled with the frame size).
  double max_shape_shift = 6.0;
  double max_rotation = 0.15;
  double max_background_shift = 2.0;
  int shapes = 2;
};

/// One training example. Tensors are [1, C, H, W]; images in [0, 1], quantised to 1/255.
struct Triplet {
  torch::Tensor frame0, frame1, target;
  torch::Tensor flow01, flow10;
  double t = 0.5;
};

/// Same seed, size and motion give bit-identical triplets. Throws ValidationError for sizes below
/// 8 pixels or t outside (0, 1).
Triplet synth_triplet(uint64_t seed, int64_t height, int64_t width, const MotionSpec& motion = {});

/// Concatenates triplets along the batch axis; all must share size and t.
Triplet stack_triplets(const std::vector<Triplet>& items);

}  // namespace vfi
