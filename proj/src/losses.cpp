#include "vfi/losses.hpp"

#include <cmath>
#include <sstream>

#include "vfi/errors.hpp"

namespace vfi {

PerceptualNetImpl::PerceptualNetImpl(uint64_t seed) {
  const std::array<std::array<int64_t, 3>, 4> plan{{{3, 16, 1}, {16, 32, 2}, {32, 32, 1},
                                                    {32, 64, 2}}};
  for (size_t i = 0; i < plan.size(); ++i) {
    convs_.push_back(register_module("conv" + std::to_string(i),
                                     make_conv(plan[i][0], plan[i][1], 3, plan[i][2])));
  }
  init_fan_in(*this, seed);
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor PerceptualNetImpl::forward(const torch::Tensor& image) {
  auto x = image;
  for (size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i]->forward(x);
    if (i + 1 < convs_.size()) x = torch::relu(x);
  }
  return x;
}

torch::Tensor perceptual_loss(PerceptualNet& featnet, const torch::Tensor& pred,
                              const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) {
    throw DimensionError("perceptual_loss: " + shape_string(pred) + " vs " + shape_string(gt));
  }
  return (featnet->forward(pred) - featnet->forward(gt)).square().mean();
}

LatentCode latent_matched_sample(const LatentCode& z, torch::Generator& gen) {
  const auto flat = z.flatten().detach();
  const auto mean = flat.mean();
  const auto var = flat.var(/*unbiased=*/false);
  LatentCode out;
  for (const auto& p : z.parts) {
    out.parts.push_back(mean + var.sqrt() * torch::randn(p.sizes(), gen, p.options()));
  }
  return out;
}

LossTerms total_loss(Interpolator& model, const Triplet& batch, PerceptualNet& featnet,
                     const LossOptions& options, torch::Generator& gen) {
  const auto cond =
      model->condition(batch.frame0, batch.frame1, batch.flow01, batch.flow10, batch.t,
                       /*training=*/true, gen);
  auto x = to_model_range(batch.target);
  if (options.dequantization > 0.0) {
    x = x + (torch::rand(x.sizes(), gen, x.options()) - 0.5) * options.dequantization;
  }
  const auto encoded = model->generator->encode(x, cond.blended);
  const double dims = static_cast<double>(x[0].numel());

  LossTerms terms;
  terms.nll = ((standard_normal_nll(encoded.z) - encoded.logdet) / dims).mean();
  const auto z_prime = latent_matched_sample(encoded.z, gen);
  const auto decoded = from_model_range(model->generator->decode(z_prime, cond.blended));
  terms.perceptual = perceptual_loss(featnet, decoded, batch.target);
  terms.total = options.mu == 0.0 ? terms.nll : terms.nll + options.mu * terms.perceptual;

  if (!torch::isfinite(terms.total).item<bool>()) {
    std::ostringstream os;
    os << "total_loss: non-finite loss (nll=" << terms.nll.item<double>()
       << ", perceptual=" << terms.perceptual.item<double>() << ")";
    throw NumericalError(os.str());
  }
  return terms;
}

}  // namespace vfi
