#include "vfi/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vfi/checkpoint.hpp"
#include "vfi/errors.hpp"
#include "vfi/losses.hpp"

namespace vfi {

namespace fs = std::filesystem;

Triplet training_triplet(const TrainConfig& config, int64_t index) {
  MotionSpec motion;
  motion.t = config.t;
  return synth_triplet(config.data_seed + static_cast<uint64_t>(index), config.size, config.size,
                       motion);
}

namespace {

Triplet provided_batch(const TrainConfig& config, const FlowProvider& provider,
                       int64_t iteration) {
  std::vector<Triplet> items;
  for (int64_t j = 0; j < config.batch; ++j) {
    const int64_t index = (iteration * config.batch + j) % config.dataset_size;
    auto tr = training_triplet(config, index);
    const auto flows = provider.provide(
        {tr.frame0, tr.frame1, std::to_string(index), tr.flow01, tr.flow10});
    tr.flow01 = flows.flow01;
    tr.flow10 = flows.flow10;
    items.push_back(std::move(tr));
  }
  return stack_triplets(items);
}

std::string checkpoint_name(const fs::path& dir, int64_t iteration) {
  char name[32];
  std::snprintf(name, sizeof(name), "ckpt_%06lld.vfi", static_cast<long long>(iteration));
  return (dir / name).string();
}

}  // namespace

TrainResult train_loop(const TrainConfig& config, const FlowProvider& provider,
                       const std::function<void(const IterationLog&)>& on_step) {
  config.validate();
  at::set_num_threads(static_cast<int>(config.threads));
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);

  Interpolator model{nullptr};
  int64_t start = 0;
  std::optional<Checkpoint> resumed;
  if (!config.resume.empty()) {
    resumed = read_checkpoint(config.resume);
    model = restore_model(*resumed);
    start = resumed->iteration;
  } else {
    model = Interpolator(config.model_config());
  }
  model->train();
  PerceptualNet featnet;
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(config.lr));
  if (resumed) restore_optimizer(*resumed, model, optimizer);

  std::ofstream csv((dir / "loss.csv").string(),
                    start == 0 ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot write loss log in '" + dir.string() + "'");
  csv.precision(17);
  if (start == 0) csv << "iteration,nll,perceptual,total,lr\n";

  LossOptions loss_options;
  loss_options.mu = config.mu;
  TrainResult result;
  std::string last_good = resumed ? config.resume : std::string{};

  auto save = [&](int64_t iteration) {
    const auto path = checkpoint_name(dir, iteration);
    write_checkpoint(path, capture(model, &optimizer, iteration));
    result.checkpoints.push_back(path);
    last_good = path;
  };

  for (int64_t it = start; it < config.iterations; ++it) {
    const double lr = config.learning_rate(it);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    const auto batch = provided_batch(config, provider, it);
    auto gen = make_generator(mix_seed(config.seed, static_cast<uint64_t>(it)));

    optimizer.zero_grad();
    LossTerms terms;
    try {
      terms = total_loss(model, batch, featnet, loss_options, gen);
    } catch (const NumericalError& e) {
      throw TrainingDiverged(std::string(e.what()) + " at iteration " + std::to_string(it + 1),
                             last_good);
    }
    terms.total.backward();
    optimizer.step();

    IterationLog entry{it + 1, terms.nll.item<double>(), terms.perceptual.item<double>(),
                       terms.total.item<double>(), lr};
    csv << entry.iteration << ',' << entry.nll << ',' << entry.perceptual << ',' << entry.total
        << ',' << entry.lr << '\n';
    result.log.push_back(entry);
    if (on_step) on_step(entry);
    if ((it + 1) % config.checkpoint_every == 0 || it + 1 == config.iterations) save(it + 1);
  }
  csv.flush();

  if (result.checkpoints.empty()) save(start);
  result.final_checkpoint = (dir / "final.vfi").string();
  fs::copy_file(result.checkpoints.back(), result.final_checkpoint,
                fs::copy_options::overwrite_existing);
  return result;
}

}  // namespace vfi
