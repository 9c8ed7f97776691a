// vfi: command-line front end. Verbs: train, interpolate, sweep-tau, metrics, synth, replay.
// Exit codes: 0 success, 1 usage error, 2 data/format error.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfi/checkpoint.hpp"
#include "vfi/config.hpp"
#include "vfi/errors.hpp"
#include "vfi/flow_provider.hpp"
#include "vfi/io.hpp"
#include "vfi/metrics.hpp"
#include "vfi/model.hpp"
#include "vfi/nn_util.hpp"
#include "vfi/synthetic.hpp"
#include "vfi/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "synth:<seed>[:<size>[:<motion>]]", motion in {random, still}
struct SynthTag {
  uint64_t seed = 0;
  int64_t size = 64;
  vfi::MotionSpec motion;
  std::string text;
};

std::optional<SynthTag> parse_synth_tag(const std::string& s) {
  if (s.rfind("synth:", 0) != 0) return std::nullopt;
  SynthTag tag;
  tag.text = s;
  std::vector<std::string> parts;
  std::stringstream ss(s.substr(6));
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  auto bad = [&] {
    return UsageError("bad synthetic tag '" + s + "', expected synth:<seed>[:<size>[:random|still]]");
  };
  if (parts.empty() || parts.size() > 3) throw bad();
  try {
    size_t used = 0;
    tag.seed = std::stoull(parts[0], &used);
    if (used != parts[0].size()) throw bad();
    if (parts.size() > 1) {
      tag.size = std::stoll(parts[1], &used);
      if (used != parts[1].size() || tag.size < 8) throw bad();
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  if (parts.size() > 2) {
    if (parts[2] == "still") {
      tag.motion.kind = vfi::MotionSpec::Kind::Still;
    } else if (parts[2] != "random") {
      throw bad();
    }
  }
  return tag;
}

struct Inputs {
  torch::Tensor frame0, frame1, flow01, flow10;
  torch::Tensor reference;  // undefined unless known
};

// Frames from PNG paths or a synthetic tag; flows from .flo files or the synthetic scene.
Inputs load_inputs(const std::string& frame0, const std::string& frame1, const std::string& flow01,
                   const std::string& flow10, double t, const std::string& reference) {
  Inputs in;
  auto tag0 = parse_synth_tag(frame0);
  auto tag1 = parse_synth_tag(frame1);
  if (tag0.has_value() != tag1.has_value() || (tag0 && tag0->text != tag1->text)) {
    throw UsageError("synthetic inputs must use the same tag for --frame0 and --frame1");
  }
  vfi::FramePair pair;
  if (tag0) {
    auto motion = tag0->motion;
    motion.t = t;
    auto tr = vfi::synth_triplet(tag0->seed, tag0->size, tag0->size, motion);
    pair.frame0 = tr.frame0;
    pair.frame1 = tr.frame1;
    pair.true_flow01 = tr.flow01;
    pair.true_flow10 = tr.flow10;
    in.reference = tr.target;
  } else {
    pair.frame0 = vfi::io::read_png(frame0);
    pair.frame1 = vfi::io::read_png(frame1);
    vfi::require_same_spatial(pair.frame0, pair.frame1, "frame0 vs frame1");
  }
  if (flow01.empty() != flow10.empty()) {
    throw UsageError("--flow01 and --flow10 must be given together");
  }
  vfi::FlowPair flows;
  if (!flow01.empty()) {
    flows = vfi::FlowProvider::files(flow01, flow10).provide(pair);
  } else if (tag0) {
    flows = vfi::FlowProvider::synthetic().provide(pair);
  } else {
    throw UsageError(
        "no flows for real frames: pass --flow01 and --flow10 (Middlebury .flo); "
        "there is no built-in motion estimator");
  }
  if (!reference.empty()) {
    in.reference = vfi::io::read_png(reference);
    vfi::require_same_spatial(in.reference, pair.frame0, "reference vs frames");
  }
  in.frame0 = pair.frame0;
  in.frame1 = pair.frame1;
  in.flow01 = flows.flow01;
  in.flow10 = flows.flow10;
  return in;
}

vfi::Interpolator load_model(const std::string& path) {
  auto model = vfi::restore_model(vfi::read_checkpoint(path));
  model->eval();
  return model;
}

void check_t(double t) {
  if (!(t > 0.0 && t < 1.0)) throw UsageError("--t must lie in (0, 1)");
}

void check_tau(double tau) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw UsageError("--tau must be a finite value >= 0");
}

json manifest_base(const std::string& command, const std::vector<std::string>& args) {
  json m;
  m["command"] = command;
  m["argv"] = args;
  m["cwd"] = fs::current_path().string();
  return m;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw vfi::IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

// ---------------------------------------------------------------------------------------------

struct InterpolateArgs {
  std::string checkpoint, frame0, frame1, flow01, flow10, out;
  double t = 0.5, tau = 0.3;
  uint64_t seed = 0;
};

int cmd_interpolate(const InterpolateArgs& a, const std::vector<std::string>& args) {
  check_t(a.t);
  check_tau(a.tau);
  auto model = load_model(a.checkpoint);
  auto in = load_inputs(a.frame0, a.frame1, a.flow01, a.flow10, a.t, "");
  model->check_frame_size(in.frame0.size(2), in.frame0.size(3));
  torch::NoGradGuard ng;
  auto gen = vfi::make_generator(a.seed);
  auto out = model->interpolate(in.frame0, in.frame1, in.flow01, in.flow10, a.t, a.tau, gen);
  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  vfi::io::write_png(a.out, out);

  auto m = manifest_base("interpolate", args);
  m["config"] = nullptr;
  m["inputs"] = {{"checkpoint", a.checkpoint}, {"frame0", a.frame0}, {"frame1", a.frame1},
                 {"flow01", a.flow01.empty() ? json(nullptr) : json(a.flow01)},
                 {"flow10", a.flow10.empty() ? json(nullptr) : json(a.flow10)}};
  m["seed"] = a.seed;
  m["tau"] = a.tau;
  m["t"] = a.t;
  m["output"] = a.out;
  write_json(a.out + ".manifest.json", m);
  std::cout << "wrote " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string config, out;
  std::vector<std::string> overrides;
  int64_t log_every = 100;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args) {
  std::string config_path = a.config;
  if (config_path.empty()) {
    if (const char* env = std::getenv("VFI_CONFIG")) config_path = env;
  }
  if (config_path.empty()) throw UsageError("train needs --config PATH (or VFI_CONFIG)");
  auto config = vfi::load_train_config(config_path);
  if (!a.overrides.empty()) {
    std::string text;
    for (const auto& o : a.overrides) text += o + "\n";
    config = vfi::parse_train_config(text, config);
  }
  if (!a.out.empty()) config.output_dir = a.out;
  config.validate();

  const auto start = std::chrono::steady_clock::now();
  auto result = vfi::train_loop(config, vfi::FlowProvider::synthetic(), [&](const vfi::IterationLog& l) {
    if (a.log_every > 0 && (l.iteration % a.log_every == 0 || l.iteration == config.iterations)) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "iter " << l.iteration << " nll " << fmt(l.nll) << " perceptual "
                << fmt(l.perceptual) << " lr " << l.lr << " elapsed " << std::fixed
                << std::setprecision(1) << secs << "s" << std::defaultfloat << "\n";
    }
  });

  auto m = manifest_base("train", args);
  m["config"] = config_path;
  m["settings"] = config.to_map();
  m["inputs"] = {{"data", "synthetic"}, {"data_seed", config.data_seed}};
  m["seed"] = config.seed;
  m["tau"] = config.tau;
  m["t"] = config.t;
  m["output"] = config.output_dir;
  m["checkpoints"] = result.checkpoints;
  m["final_checkpoint"] = result.final_checkpoint;
  write_json(fs::path(config.output_dir) / "manifest.json", m);
  std::cout << "final checkpoint " << result.final_checkpoint << "\n";
  return kOk;
}

struct SweepArgs {
  std::string checkpoint, frame0, frame1, flow01, flow10, reference, out, taus = "0,0.1,0.3,0.8";
  double t = 0.5;
  uint64_t seed = 0;
  int seeds = 8;
  bool no_frames = false;
};

std::vector<double> parse_taus(const std::string& text) {
  std::vector<double> taus;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("bad tau value '" + item + "'");
    check_tau(v);
    taus.push_back(v);
  }
  if (taus.empty()) throw UsageError("empty tau list");
  return taus;
}

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& args) {
  check_t(a.t);
  const auto taus = parse_taus(a.taus);
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  auto model = load_model(a.checkpoint);
  auto in = load_inputs(a.frame0, a.frame1, a.flow01, a.flow10, a.t, a.reference);
  if (!in.reference.defined()) {
    throw UsageError("sweep-tau needs --reference for real frames (synthetic tags carry one)");
  }
  model->check_frame_size(in.frame0.size(2), in.frame0.size(3));
  const fs::path dir(a.out);
  fs::create_directories(dir);

  torch::NoGradGuard ng;
  const auto csv_path = dir / "sweep.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw vfi::IoError("cannot write '" + csv_path.string() + "'");
  csv << "tau,psnr_mean,ssim_mean,seed_std\n";
  json rows = json::array();
  for (double tau : taus) {
    std::vector<torch::Tensor> outs;
    double psnr_sum = 0, ssim_sum = 0;
    for (int k = 0; k < a.seeds; ++k) {
      auto gen = vfi::make_generator(vfi::mix_seed(a.seed, static_cast<uint64_t>(k)));
      auto out = model->interpolate(in.frame0, in.frame1, in.flow01, in.flow10, a.t, tau, gen);
      psnr_sum += vfi::metrics::psnr(out, in.reference);
      ssim_sum += vfi::metrics::ssim(out, in.reference);
      if (!a.no_frames) {
        std::ostringstream name;
        name << "tau" << tau << "_seed" << k << ".png";
        vfi::io::write_png((dir / name.str()).string(), out);
      }
      outs.push_back(out.to(torch::kFloat64));
    }
    // per-pixel population std across seeds, averaged over pixels; exact zero for equal outputs
    auto stack = torch::stack(outs, 0);
    auto mean = stack.mean(0, true);
    const double seed_std = (stack - mean).square().mean(0).sqrt().mean().item<double>();
    const double psnr_mean = psnr_sum / a.seeds, ssim_mean = ssim_sum / a.seeds;
    csv << fmt(tau) << "," << fmt(psnr_mean) << "," << fmt(ssim_mean) << "," << fmt(seed_std)
        << "\n";
    rows.push_back({{"tau", tau}, {"psnr_mean", psnr_mean}, {"ssim_mean", ssim_mean},
                    {"seed_std", seed_std}});
    std::cout << "tau " << tau << " psnr " << psnr_mean << " ssim " << ssim_mean << " seed_std "
              << seed_std << "\n";
  }

  auto m = manifest_base("sweep-tau", args);
  m["config"] = nullptr;
  m["inputs"] = {{"checkpoint", a.checkpoint}, {"frame0", a.frame0}, {"frame1", a.frame1},
                 {"flow01", a.flow01.empty() ? json(nullptr) : json(a.flow01)},
                 {"flow10", a.flow10.empty() ? json(nullptr) : json(a.flow10)},
                 {"reference", a.reference.empty() ? json(nullptr) : json(a.reference)}};
  m["seed"] = a.seed;
  m["seeds"] = a.seeds;
  m["tau"] = taus;
  m["t"] = a.t;
  m["output"] = a.out;
  m["rows"] = rows;
  write_json(dir / "manifest.json", m);
  return kOk;
}

struct MetricsArgs {
  std::string a, b, out;
};

int cmd_metrics(const MetricsArgs& a, const std::vector<std::string>& args) {
  auto img_a = vfi::io::read_png(a.a);
  auto img_b = vfi::io::read_png(a.b);
  const double p = vfi::metrics::psnr(img_a, img_b);
  const double s = vfi::metrics::ssim(img_a, img_b);
  std::cout << "psnr " << fmt(p) << "\nssim " << fmt(s) << "\n";
  if (!a.out.empty()) {
    json r{{"psnr", std::isinf(p) ? json("inf") : json(p)}, {"ssim", s}};
    write_json(a.out, r);
    auto m = manifest_base("metrics", args);
    m["config"] = nullptr;
    m["inputs"] = {{"a", a.a}, {"b", a.b}};
    m["seed"] = nullptr;
    m["tau"] = nullptr;
    m["t"] = nullptr;
    m["output"] = a.out;
    write_json(a.out + ".manifest.json", m);
  }
  return kOk;
}

struct SynthArgs {
  std::string tag, out;
  double t = 0.5;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& args) {
  check_t(a.t);
  auto tag = parse_synth_tag(a.tag);
  if (!tag) throw UsageError("expected a tag of the form synth:<seed>[:<size>[:random|still]]");
  auto motion = tag->motion;
  motion.t = a.t;
  auto tr = vfi::synth_triplet(tag->seed, tag->size, tag->size, motion);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  vfi::io::write_png((dir / "frame0.png").string(), tr.frame0);
  vfi::io::write_png((dir / "frame1.png").string(), tr.frame1);
  vfi::io::write_png((dir / "target.png").string(), tr.target);
  vfi::io::write_flow_file((dir / "flow01.flo").string(), tr.flow01);
  vfi::io::write_flow_file((dir / "flow10.flo").string(), tr.flow10);
  auto m = manifest_base("synth", args);
  m["config"] = nullptr;
  m["inputs"] = {{"tag", a.tag}};
  m["seed"] = tag->seed;
  m["tau"] = nullptr;
  m["t"] = a.t;
  m["output"] = a.out;
  write_json(dir / "manifest.json", m);
  return kOk;
}

int run(std::vector<std::string> args);

struct ReplayArgs {
  std::string manifest, out;
};

// Re-executes the argv recorded in a manifest from its working directory. --out replaces the
// recorded output location.
int cmd_replay(const ReplayArgs& a) {
  std::ifstream in(a.manifest);
  if (!in) throw vfi::IoError("cannot open manifest '" + a.manifest + "'");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw vfi::FormatError("manifest '" + a.manifest + "': " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array() || !m.contains("cwd")) {
    throw vfi::FormatError("manifest '" + a.manifest + "': missing argv/cwd");
  }
  std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
  if (!args.empty() && args[0] == "replay") throw vfi::FormatError("manifest records a replay");
  if (!a.out.empty()) {
    const auto out = fs::absolute(a.out).string();
    bool replaced = false;
    for (size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--out") {
        args[i + 1] = out;
        replaced = true;
      }
    }
    if (!replaced) {
      args.push_back("--out");
      args.push_back(out);
    }
  }
  fs::current_path(m["cwd"].get<std::string>());
  return run(args);
}

int run(std::vector<std::string> args) {
  CLI::App app{"vfi: perception-oriented video frame interpolation"};
  app.require_subcommand(1);

  InterpolateArgs ia;
  auto* interp = app.add_subcommand("interpolate", "Synthesise the frame at time t");
  interp->add_option("--checkpoint", ia.checkpoint, "Model checkpoint (.vfi)")->required();
  interp->add_option("--frame0", ia.frame0, "First frame: PNG path or synth:<seed>[:<size>[:motion]]")
      ->required();
  interp->add_option("--frame1", ia.frame1, "Second frame (same tag for synthetic input)")->required();
  interp->add_option("--t", ia.t, "Target time in (0, 1)")->capture_default_str();
  interp->add_option("--tau", ia.tau, "Sampling temperature")->capture_default_str();
  interp->add_option("--seed", ia.seed, "Latent sampling seed")->capture_default_str();
  interp->add_option("--flow01", ia.flow01, "Flow frame0 -> frame1 (.flo)");
  interp->add_option("--flow10", ia.flow10, "Flow frame1 -> frame0 (.flo)");
  interp->add_option("--out", ia.out, "Output PNG")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train on synthetic triplets");
  train->add_option("--config", ta.config, "Config file (default: $VFI_CONFIG)");
  train->add_option("--set", ta.overrides, "Override a config key: key=value (repeatable)");
  train->add_option("--out", ta.out, "Output directory (overrides output_dir)");
  train->add_option("--log-every", ta.log_every, "Progress line every N iterations (0: quiet)")
      ->capture_default_str();

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep-tau", "Temperature sweep: PSNR/SSIM and seed spread");
  sweep->add_option("--checkpoint", sa.checkpoint, "Model checkpoint (.vfi)")->required();
  sweep->add_option("--frame0", sa.frame0, "First frame or synthetic tag")->required();
  sweep->add_option("--frame1", sa.frame1, "Second frame or synthetic tag")->required();
  sweep->add_option("--reference", sa.reference, "Ground-truth middle frame (PNG)");
  sweep->add_option("--flow01", sa.flow01, "Flow frame0 -> frame1 (.flo)");
  sweep->add_option("--flow10", sa.flow10, "Flow frame1 -> frame0 (.flo)");
  sweep->add_option("--t", sa.t, "Target time in (0, 1)")->capture_default_str();
  sweep->add_option("--taus", sa.taus, "Comma-separated temperatures")->capture_default_str();
  sweep->add_option("--seeds", sa.seeds, "Samples per temperature")->capture_default_str();
  sweep->add_option("--seed", sa.seed, "Base seed")->capture_default_str();
  sweep->add_flag("--no-frames", sa.no_frames, "Skip writing the sampled frames");
  sweep->add_option("--out", sa.out, "Output directory")->required();

  MetricsArgs ma;
  auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two PNG images");
  metrics->add_option("a", ma.a, "First image")->required();
  metrics->add_option("b", ma.b, "Second image")->required();
  metrics->add_option("--out", ma.out, "Also write the values as JSON");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a synthetic triplet with its flow files");
  synth->add_option("tag", ya.tag, "synth:<seed>[:<size>[:random|still]]")->required();
  synth->add_option("--t", ya.t, "Time of the middle frame")->capture_default_str();
  synth->add_option("--out", ya.out, "Output directory")->required();

  ReplayArgs ra;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", ra.manifest, "Manifest JSON")->required();
  replay->add_option("--out", ra.out, "Replace the recorded output location");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*interp) return cmd_interpolate(ia, args);
  if (*train) return cmd_train(ta, args);
  if (*sweep) return cmd_sweep(sa, args);
  if (*metrics) return cmd_metrics(ma, args);
  if (*synth) return cmd_synth(ya, args);
  if (*replay) return cmd_replay(ra);
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    // ValidationError, DimensionError, FormatError, IoError, NumericalError and torch errors
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
