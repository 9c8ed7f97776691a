#include "vfi/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "vfi/checkpoint.hpp"
#include "vfi/errors.hpp"

namespace vfi {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw ValidationError("config key '" + key + "': bad value '" + value + "'");
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T TrainConfig::*member) {
  return [member](TrainConfig& c, const std::string& k, const std::string& v) {
    c.*member = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"size", number(&TrainConfig::size)},
      {"batch", number(&TrainConfig::batch)},
      {"iterations", number(&TrainConfig::iterations)},
      {"lr", number(&TrainConfig::lr)},
      {"epoch_iterations", number(&TrainConfig::epoch_iterations)},
      {"halve_every", number(&TrainConfig::halve_every)},
      {"mu", number(&TrainConfig::mu)},
      {"alpha", number(&TrainConfig::alpha)},
      {"beta", number(&TrainConfig::beta)},
      {"tau", number(&TrainConfig::tau)},
      {"t", number(&TrainConfig::t)},
      {"seed", number(&TrainConfig::seed)},
      {"data_seed", number(&TrainConfig::data_seed)},
      {"dataset_size", number(&TrainConfig::dataset_size)},
      {"checkpoint_every", number(&TrainConfig::checkpoint_every)},
      {"threads", number(&TrainConfig::threads)},
      {"flow_levels", number(&TrainConfig::flow_levels)},
      {"flow_steps", number(&TrainConfig::flow_steps)},
      {"cond_width", number(&TrainConfig::cond_width)},
      {"coupling_hidden", number(&TrainConfig::coupling_hidden)},
      {"channels",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         try {
           c.channels = parse_int_list(v);
         } catch (const std::exception&) {
           throw ValidationError("config key '" + k + "': bad value '" + v + "'");
         }
       }},
      {"base_shift", number(&TrainConfig::base_shift)},
      {"prior", [](TrainConfig& c, const std::string&, const std::string& v) { c.prior = v; }},
      {"output_dir", [](TrainConfig& c, const std::string&, const std::string& v) {
         c.output_dir = v;
       }},
      {"resume", [](TrainConfig& c, const std::string&, const std::string& v) { c.resume = v; }},
  };
  return table;
}

}  // namespace

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.size = 64;
  c.batch = 8;
  return c;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.channels = channels;
  m.flow_levels = static_cast<int>(flow_levels);
  m.flow_steps = static_cast<int>(flow_steps);
  m.cond_width = cond_width;
  m.coupling_hidden = coupling_hidden;
  m.seed = seed;
  m.beta = beta;
  m.train_alpha = alpha;
  m.learned_prior = prior == "learned";
  m.base_shift = base_shift != 0;
  return m;
}

double TrainConfig::learning_rate(int64_t iteration) const {
  const int64_t epoch = iteration / epoch_iterations;
  return lr * std::pow(0.5, static_cast<double>(epoch / halve_every));
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("config key '" + key + "': " + why);
  };
  if (batch < 1) fail("batch", "must be >= 1");
  if (iterations < 0) fail("iterations", "must be >= 0");
  if (!(lr > 0)) fail("lr", "must be > 0");
  if (epoch_iterations < 1) fail("epoch_iterations", "must be >= 1");
  if (halve_every < 1) fail("halve_every", "must be >= 1");
  if (!(mu >= 0)) fail("mu", "must be >= 0");
  if (!(alpha >= 0)) fail("alpha", "must be >= 0");
  if (!(tau >= 0)) fail("tau", "must be >= 0");
  if (!(t > 0 && t < 1)) fail("t", "must lie in (0, 1)");
  if (dataset_size < 1) fail("dataset_size", "must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every", "must be >= 1");
  if (threads < 1) fail("threads", "must be >= 1");
  if (flow_levels < 1) fail("flow_levels", "must be >= 1");
  if (base_shift != 0 && base_shift != 1) fail("base_shift", "must be 0 or 1");
  if (prior != "standard" && prior != "learned") fail("prior", "must be 'standard' or 'learned'");
  if (flow_steps < 1) fail("flow_steps", "must be >= 1");
  if (channels.empty()) fail("channels", "must not be empty");
  for (auto ch : channels) {
    if (ch < 1) fail("channels", "entries must be >= 1");
  }
  const int64_t m = model_config().size_multiple();
  if (size < 8 || size % m != 0) {
    fail("size", "must be >= 8 and divisible by " + std::to_string(m));
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto num = [](auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  m["size"] = num(size);
  m["batch"] = num(batch);
  m["iterations"] = num(iterations);
  m["lr"] = num(lr);
  m["epoch_iterations"] = num(epoch_iterations);
  m["halve_every"] = num(halve_every);
  m["mu"] = num(mu);
  m["alpha"] = num(alpha);
  m["beta"] = num(beta);
  m["tau"] = num(tau);
  m["t"] = num(t);
  m["seed"] = num(seed);
  m["data_seed"] = num(data_seed);
  m["dataset_size"] = num(dataset_size);
  m["checkpoint_every"] = num(checkpoint_every);
  m["threads"] = num(threads);
  m["channels"] = config_to_string(channels);
  m["flow_levels"] = num(flow_levels);
  m["flow_steps"] = num(flow_steps);
  m["cond_width"] = num(cond_width);
  m["coupling_hidden"] = num(coupling_hidden);
  m["prior"] = prior;
  m["base_shift"] = num(base_shift);
  m["output_dir"] = output_dir;
  m["resume"] = resume;
  return m;
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> unknown;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) {
      unknown.push_back(key);
      continue;
    }
    it->second(base, key, value);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ValidationError(msg);
  }
  return base;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str(), std::move(base));
}

std::string format_train_config(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& [k, v] : config.to_map()) os << k << " = " << v << "\n";
  return os.str();
}

}  // namespace vfi
