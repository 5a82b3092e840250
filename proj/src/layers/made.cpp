#include "mixerflow/layers/made.hpp"

#include <string>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

namespace {

std::vector<double> build_mask(const std::vector<std::size_t>& in, const std::vector<std::size_t>& out, bool strict) {
  std::vector<double> mask(out.size() * in.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < in.size(); ++j) {
      const bool on = strict ? out[i] > in[j] : out[i] >= in[j];
      mask[i * in.size() + j] = on ? 1.0 : 0.0;
    }
  return mask;
}

}  // namespace

MadeNetwork::MadeNetwork(std::string path, std::size_t inputs, const MadeOptions& options, Rng& rng)
    : Module(std::move(path)), inputs_(inputs), gelu_(options.gelu) {
  if (inputs < 2) throw ContractError(this->path() + ": MADE needs at least 2 inputs");
  if (options.hidden.empty()) throw ContractError(this->path() + ": MADE needs at least one hidden layer");
  for (std::size_t w : options.hidden) {
    if (w == 0) throw ContractError(this->path() + ": MADE hidden width must be positive");
  }

  std::vector<std::size_t> input_degrees(inputs);
  for (std::size_t i = 0; i < inputs; ++i) input_degrees[i] = i + 1;
  degrees_.push_back(input_degrees);

  Rng mask_rng(options.mask_seed);
  for (std::size_t w : options.hidden) {
    std::vector<std::size_t> deg(w);
    for (std::size_t k = 0; k < w; ++k) {
      deg[k] = options.degrees == DegreeAssignment::random ? 1 + mask_rng.below(inputs - 1) : 1 + k % (inputs - 1);
    }
    degrees_.push_back(std::move(deg));
  }
  std::vector<std::size_t> output_degrees(2 * inputs);
  for (std::size_t i = 0; i < 2 * inputs; ++i) output_degrees[i] = i % inputs + 1;
  degrees_.push_back(output_degrees);

  for (std::size_t l = 0; l + 1 < degrees_.size(); ++l) {
    const bool last = l + 2 == degrees_.size();
    const auto& in = degrees_[l];
    const auto& out = degrees_[l + 1];
    const std::string name = last ? "output" : "hidden" + std::to_string(l);
    Dense& layer = adopt(std::make_unique<Dense>(child_path(name), in.size(), out.size(), rng,
                                                 last ? DenseInit::zero : DenseInit::uniform));
    layer.set_mask(build_mask(in, out, last));
    layers_.push_back(&layer);
  }
}

Tensor MadeNetwork::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = (*layers_[l])(h);
    if (l + 1 < layers_.size()) h = gelu(h, gelu_);
  }
  return h;
}

}  // namespace mixerflow
