#pragma once

// Asymmetric feature blending: the frame-0 pyramid is softmax-splatted to time t, the frame-1
// pyramid is aligned to time t by a coarse-to-fine deformable sampler, and the two are mixed with a
// quasi-binary occlusion mask grown from the splatting holes.

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "vfi/nn_util.hpp"

namespace vfi {

enum class AttentionNorm { Sigmoid, Softmax };

struct BlendOptions {
  std::vector<int64_t> channels{32, 64, 96};
  int64_t importance_hidden = 16;
  int64_t offset_hidden = 16;
  int64_t sample_points = 9;
  int64_t dilation_channels = 16;
  int64_t attention_hidden = 8;
  double beta = 2.0;
  double train_alpha = 1e-3;
  double occlusion_eps = 0.5;
  AttentionNorm attention = AttentionNorm::Sigmoid;
};

/// Small network scoring splatting priority from level-0 features and a brightness-constancy term.
class ImportanceNetImpl : public torch::nn::Module {
 public:
  ImportanceNetImpl(int64_t feature_channels, int64_t hidden);
  /// f0, f1: level-0 features; flow01 at the same resolution. Returns Z, [N, 1, H, W].
  torch::Tensor forward(const torch::Tensor& f0, const torch::Tensor& f1,
                        const torch::Tensor& flow01);
  torch::nn::Conv2d head{nullptr};

 private:
  torch::nn::Conv2d body_{nullptr};
};
TORCH_MODULE(ImportanceNet);

/// Per-level offset predictor of the deformable aligner. The last convolution starts at zero, so
/// an untrained refiner samples f1 exactly at the prior offset.
class OffsetRefinerImpl : public torch::nn::Module {
 public:
  OffsetRefinerImpl(int64_t feature_channels, int64_t hidden, int64_t points);

  struct Result {
    torch::Tensor aligned;   // [N, C, h, w]
    torch::Tensor residual;  // gate-weighted mean offset correction, [N, 2, h, w]
  };
  Result forward(const torch::Tensor& prior, const torch::Tensor& f1, const torch::Tensor& ft0);

 private:
  int64_t points_;
  torch::nn::Conv2d body_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(OffsetRefiner);

/// Coarse-to-fine deformable alignment of the frame-1 pyramid.
class AlignmentNetImpl : public torch::nn::Module {
 public:
  AlignmentNetImpl(const std::vector<int64_t>& channels, int64_t hidden, int64_t points);
  /// offset: full-resolution initial offset (time t -> frame 1). Returns f_{t,1}.
  FeaturePyramid forward(const torch::Tensor& offset, const FeaturePyramid& f1,
                         const FeaturePyramid& ft0);

 private:
  std::vector<OffsetRefiner> levels_;
};
TORCH_MODULE(AlignmentNet);

/// Bias-free mask expansion (7x7 and 3x3 at dilation 2, then 1x1; 17x17 receptive field),
/// squeeze-excitation channel attention and bias-free 1x1 projection.
class DilationNetImpl : public torch::nn::Module {
 public:
  DilationNetImpl(int64_t feature_channels, int64_t channels, int64_t attention_hidden,
                  AttentionNorm norm);
  /// Returns the unbounded mask logits \hat M, [N, 1, h, w].
  torch::Tensor forward(const torch::Tensor& binary_mask, const torch::Tensor& ft0,
                        const torch::Tensor& ft1);
  /// Channel attention weights, [N, C].
  torch::Tensor attention(const torch::Tensor& ft0, const torch::Tensor& ft1);

  /// Maximum Chebyshev distance a mask pixel can influence.
  static constexpr int64_t kReach = 8;

 private:
  AttentionNorm norm_;
  torch::nn::Conv2d expand1_{nullptr}, expand2_{nullptr}, expand3_{nullptr}, project_{nullptr};
  torch::nn::Linear squeeze_{nullptr}, excite_{nullptr};
};
TORCH_MODULE(DilationNet);

torch::Tensor time_scaled_back_flow(const torch::Tensor& flow10, double t);

/// -(F_{1->t} average-splatted by itself): flow from time t to frame 1, zero where nothing lands.
torch::Tensor init_alignment_offset(const torch::Tensor& flow1t);

/// Softmax-splat every pyramid level of f0 to time t with the level-rescaled flow and metric.
FeaturePyramid forward_warp_pyramid(const FeaturePyramid& f0, double t, const torch::Tensor& flow01,
                                    const torch::Tensor& importance);

/// tanh(|mask_logits + alpha*n| + beta*binary), n ~ U(-1, 1) per pixel. alpha > 0 requires gen.
torch::Tensor quasi_binary_mask(const torch::Tensor& mask_logits, const torch::Tensor& binary_mask,
                                double alpha, double beta, std::optional<torch::Generator> gen);

/// f_{t,0} * (1 - m) + f_{t,1} * m at every level, mask broadcast over channels.
FeaturePyramid blend_pyramid(const FeaturePyramid& ft0, const FeaturePyramid& ft1,
                             const std::vector<torch::Tensor>& masks);

struct BlendOutput {
  torch::Tensor importance;  // full-resolution Z
  FeaturePyramid warped0;    // f_{t,0}
  FeaturePyramid aligned1;   // f_{t,1}
  std::vector<torch::Tensor> binary_masks;
  std::vector<torch::Tensor> mask_logits;
  std::vector<torch::Tensor> quasi_masks;
  FeaturePyramid blended;    // f_t
};

class BlendingModuleImpl : public torch::nn::Module {
 public:
  explicit BlendingModuleImpl(BlendOptions options);

  /// training switches the mask noise on (alpha = options.train_alpha) and then needs gen.
  BlendOutput forward(double t, const FeaturePyramid& f0, const FeaturePyramid& f1,
                      const torch::Tensor& flow01, const torch::Tensor& flow10, bool training,
                      std::optional<torch::Generator> gen = std::nullopt);

  const BlendOptions& options() const { return options_; }
  ImportanceNet importance{nullptr};
  AlignmentNet aligner{nullptr};
  std::vector<DilationNet> dilation;

 private:
  BlendOptions options_;
};
TORCH_MODULE(BlendingModule);

/// Builds the module and applies the seeded initialisation (refiner heads stay zero).
BlendingModule init_blending(uint64_t seed, BlendOptions options);

}  // namespace vfi
