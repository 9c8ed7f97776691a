#include "vfi/flow_provider.hpp"

#include "vfi/errors.hpp"
#include "vfi/io.hpp"

namespace vfi {
namespace {

std::string expand(std::string pattern, const std::string& id) {
  const std::string key = "{id}";
  for (auto pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key, pos)) {
    pattern.replace(pos, key.size(), id);
    pos += id.size();
  }
  return pattern;
}

void check_dims(const torch::Tensor& flow, const torch::Tensor& frame, const std::string& what) {
  if (flow.dim() != 4 || flow.size(1) != 2 || flow.size(2) != frame.size(2) ||
      flow.size(3) != frame.size(3)) {
    throw DimensionError(what + ": flow " + shape_string(flow) + " does not match frame " +
                         shape_string(frame));
  }
}

}  // namespace

FlowProvider FlowProvider::synthetic() { return FlowProvider{}; }

FlowProvider FlowProvider::files(std::string flow01_template, std::string flow10_template) {
  FlowProvider p;
  p.mode_ = Mode::File;
  p.flow01_template_ = std::move(flow01_template);
  p.flow10_template_ = std::move(flow10_template);
  return p;
}

FlowPair FlowProvider::provide(const FramePair& frames) const {
  FlowPair out;
  if (mode_ == Mode::Synthetic) {
    if (!frames.true_flow01.defined() || !frames.true_flow10.defined()) {
      throw ValidationError("synthetic flow provider: frames '" + frames.id +
                            "' carry no ground-truth flow; supply --flow01/--flow10 files");
    }
    out = {frames.true_flow01.detach(), frames.true_flow10.detach()};
  } else {
    out.flow01 = io::read_flow_file(expand(flow01_template_, frames.id));
    out.flow10 = io::read_flow_file(expand(flow10_template_, frames.id));
    const auto n = frames.frame0.size(0);
    if (n > 1) {
      out.flow01 = out.flow01.expand({n, 2, -1, -1});
      out.flow10 = out.flow10.expand({n, 2, -1, -1});
    }
    out.flow01 = out.flow01.to(frames.frame0.scalar_type());
    out.flow10 = out.flow10.to(frames.frame0.scalar_type());
  }
  check_dims(out.flow01, frames.frame0, "flow01");
  check_dims(out.flow10, frames.frame0, "flow10");
  return out;
}

}  // namespace vfi
