#include "vfi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "vfi/errors.hpp"

namespace vfi {
namespace {

constexpr char kMagic[8] = {'V', 'F', 'I', 'C', 'K', 'P', 'T', '\0'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw FormatError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from(uint8_t code, const std::string& what) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw FormatError(what + ": unknown dtype code " + std::to_string(code));
  }
}

void write_tensor(std::ostream& os, const torch::Tensor& tensor) {
  const auto t = tensor.detach().cpu().contiguous();
  os.put(static_cast<char>(dtype_code(t.scalar_type())));
  binary::put_uint<uint32_t>(os, static_cast<uint32_t>(t.dim()));
  for (auto d : t.sizes()) binary::put_i64(os, d);
  const int64_t n = t.numel();
  switch (t.scalar_type()) {
    case torch::kFloat32: {
      const auto* p = t.data_ptr<float>();
      for (int64_t i = 0; i < n; ++i) binary::put_f32(os, p[i]);
      break;
    }
    case torch::kFloat64: {
      const auto* p = t.data_ptr<double>();
      for (int64_t i = 0; i < n; ++i) binary::put_f64(os, p[i]);
      break;
    }
    default: {
      const auto* p = t.data_ptr<int64_t>();
      for (int64_t i = 0; i < n; ++i) binary::put_i64(os, p[i]);
    }
  }
}

torch::Tensor read_tensor(std::istream& is, const std::string& what) {
  char code = 0;
  if (!is.get(code)) throw FormatError(what + ": truncated data");
  const auto dtype = dtype_from(static_cast<uint8_t>(code), what);
  const auto rank = binary::get_uint<uint32_t>(is, what);
  if (rank > 8) throw FormatError(what + ": implausible tensor rank");
  std::vector<int64_t> sizes;
  int64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    sizes.push_back(binary::get_i64(is, what));
    if (sizes.back() < 0 || sizes.back() > (int64_t{1} << 32)) {
      throw FormatError(what + ": implausible tensor extent");
    }
    n *= sizes.back();
  }
  auto t = torch::empty(sizes, torch::dtype(dtype));
  switch (dtype) {
    case torch::kFloat32: {
      auto* p = t.data_ptr<float>();
      for (int64_t i = 0; i < n; ++i) p[i] = binary::get_f32(is, what);
      break;
    }
    case torch::kFloat64: {
      auto* p = t.data_ptr<double>();
      for (int64_t i = 0; i < n; ++i) p[i] = binary::get_f64(is, what);
      break;
    }
    default: {
      auto* p = t.data_ptr<int64_t>();
      for (int64_t i = 0; i < n; ++i) p[i] = binary::get_i64(is, what);
    }
  }
  return t;
}

const std::string& require_meta(const std::map<std::string, std::string>& meta,
                                const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint: missing metadata key '" + key + "'");
  return it->second;
}

int64_t to_int(const std::string& text, const std::string& key) {
  try {
    size_t used = 0;
    const auto v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError("checkpoint: metadata '" + key + "' is not an integer: " + text);
  }
}

}  // namespace

std::string config_to_string(const std::vector<int64_t>& values) {
  std::ostringstream os;
  for (size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

std::vector<int64_t> parse_int_list(const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    const auto v = std::stoll(item, &used);
    if (used != item.size()) throw ValidationError("not an integer list: '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty integer list");
  return out;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  binary::put_uint<uint32_t>(out, kCheckpointVersion);

  auto meta = ckpt.meta;
  const auto& c = ckpt.config;
  meta["channels"] = config_to_string(c.channels);
  meta["flow_levels"] = std::to_string(c.flow_levels);
  meta["flow_steps"] = std::to_string(c.flow_steps);
  meta["cond_width"] = std::to_string(c.cond_width);
  meta["coupling_hidden"] = std::to_string(c.coupling_hidden);
  meta["seed"] = std::to_string(c.seed);
  meta["attention"] = c.attention == AttentionNorm::Sigmoid ? "sigmoid" : "softmax";
  meta["prior"] = c.learned_prior ? "learned" : "standard";
  meta["base_shift"] = c.base_shift ? "1" : "0";
  meta["iteration"] = std::to_string(ckpt.iteration);
  {
    std::ostringstream b, a;
    b.precision(17);
    a.precision(17);
    b << c.beta;
    a << c.train_alpha;
    meta["beta"] = b.str();
    meta["train_alpha"] = a.str();
  }
  binary::put_uint<uint32_t>(out, static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    binary::put_string(out, k);
    binary::put_string(out, v);
  }
  binary::put_uint<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    binary::put_string(out, name);
    write_tensor(out, t);
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  const std::string what = "checkpoint '" + path + "'";
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(what + ": bad magic, expected \"VFICKPT\"");
  }
  const auto version = binary::get_uint<uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto n_meta = binary::get_uint<uint32_t>(in, what);
  for (uint32_t i = 0; i < n_meta; ++i) {
    auto key = binary::get_string(in, what);
    ckpt.meta[key] = binary::get_string(in, what);
  }
  const auto n_tensors = binary::get_uint<uint32_t>(in, what);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto name = binary::get_string(in, what);
    ckpt.tensors[name] = read_tensor(in, what);
  }

  auto& c = ckpt.config;
  try {
    c.channels = parse_int_list(require_meta(ckpt.meta, "channels"));
  } catch (const ValidationError& e) {
    throw FormatError(what + ": " + e.what());
  }
  c.flow_levels = static_cast<int>(to_int(require_meta(ckpt.meta, "flow_levels"), "flow_levels"));
  c.flow_steps = static_cast<int>(to_int(require_meta(ckpt.meta, "flow_steps"), "flow_steps"));
  c.cond_width = to_int(require_meta(ckpt.meta, "cond_width"), "cond_width");
  c.coupling_hidden = to_int(require_meta(ckpt.meta, "coupling_hidden"), "coupling_hidden");
  c.seed = static_cast<uint64_t>(std::stoull(require_meta(ckpt.meta, "seed")));
  c.attention = require_meta(ckpt.meta, "attention") == "softmax" ? AttentionNorm::Softmax
                                                                  : AttentionNorm::Sigmoid;
  if (auto it = ckpt.meta.find("prior"); it != ckpt.meta.end()) {
    if (it->second != "standard" && it->second != "learned") {
      throw FormatError(what + ": unknown prior '" + it->second + "'");
    }
    c.learned_prior = it->second == "learned";
  }
  if (auto it = ckpt.meta.find("base_shift"); it != ckpt.meta.end()) {
    c.base_shift = to_int(it->second, "base_shift") != 0;
  }
  ckpt.iteration = to_int(require_meta(ckpt.meta, "iteration"), "iteration");
  try {
    c.beta = std::stod(require_meta(ckpt.meta, "beta"));
    c.train_alpha = std::stod(require_meta(ckpt.meta, "train_alpha"));
  } catch (const std::logic_error&) {
    throw FormatError(what + ": bad beta/train_alpha metadata");
  }
  return ckpt;
}

Checkpoint capture(Interpolator& model, const torch::optim::Adam* optimizer, int64_t iteration) {
  Checkpoint ckpt;
  ckpt.config = model->config();
  ckpt.iteration = iteration;
  for (const auto& item : model->named_parameters()) {
    ckpt.tensors["model/" + item.key()] = item.value().detach().clone();
  }
  for (const auto& item : model->named_buffers()) {
    ckpt.tensors["model/" + item.key()] = item.value().detach().clone();
  }
  if (optimizer != nullptr) {
    const auto& state = optimizer->state();
    for (const auto& item : model->named_parameters()) {
      auto it = state.find(item.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
      const std::string base = "adam/" + item.key();
      ckpt.tensors[base + "/exp_avg"] = s.exp_avg().clone();
      ckpt.tensors[base + "/exp_avg_sq"] = s.exp_avg_sq().clone();
      ckpt.tensors[base + "/step"] = torch::full({1}, s.step(), torch::kInt64);
    }
  }
  return ckpt;
}

Interpolator restore_model(const Checkpoint& ckpt) {
  Interpolator model(ckpt.config);
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    auto it = ckpt.tensors.find("model/" + name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    if (it->second.sizes() != target.sizes()) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                        shape_string(it->second) + ", model expects " + shape_string(target));
    }
    target.copy_(it->second);
  };
  for (auto& item : model->named_parameters()) assign(item.key(), item.value());
  for (auto& item : model->named_buffers()) assign(item.key(), item.value());
  return model;
}

bool restore_optimizer(const Checkpoint& ckpt, Interpolator& model, torch::optim::Adam& optimizer) {
  bool any = false;
  for (auto& item : model->named_parameters()) {
    const std::string base = "adam/" + item.key();
    auto avg = ckpt.tensors.find(base + "/exp_avg");
    if (avg == ckpt.tensors.end()) continue;
    auto sq = ckpt.tensors.find(base + "/exp_avg_sq");
    auto step = ckpt.tensors.find(base + "/step");
    if (sq == ckpt.tensors.end() || step == ckpt.tensors.end()) {
      throw FormatError("checkpoint: incomplete optimizer state for '" + item.key() + "'");
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<int64_t>());
    s->exp_avg(avg->second.clone().to(item.value().scalar_type()));
    s->exp_avg_sq(sq->second.clone().to(item.value().scalar_type()));
    optimizer.state()[item.value().unsafeGetTensorImpl()] = std::move(s);
    any = true;
  }
  return any;
}

}  // namespace vfi
