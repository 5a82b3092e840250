#include "mixerflow/layers/conditioner.hpp"

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

ResidualConditioner::ResidualConditioner(std::string path, std::size_t in, std::size_t out,
                                         const ConditionerOptions& options, Rng& rng)
    : Conditioner(std::move(path)), in_(in), out_(out), options_(options) {
  if (options.hidden == 0) throw ContractError(this->path() + ": hidden width must be positive");
  const std::size_t h = options.hidden;
  input_ = &adopt(std::make_unique<Dense>(child_path("input"), in, h, rng));
  dense1_ = &adopt(std::make_unique<Dense>(child_path("dense1"), h, h, rng));
  if (options.normalize) norm1_ = &adopt(std::make_unique<FeatureNorm>(child_path("norm1"), h));
  dense2_ = &adopt(std::make_unique<Dense>(child_path("dense2"), h, h, rng));
  if (options.normalize) norm2_ = &adopt(std::make_unique<FeatureNorm>(child_path("norm2"), h));
  output_ = &adopt(std::make_unique<Dense>(child_path("output"), h, out, rng, DenseInit::zero));
}

Tensor ResidualConditioner::operator()(const Tensor& x, bool update_statistics) {
  const Tensor h = (*input_)(x);
  Tensor r = (*dense1_)(h);
  if (norm1_) r = (*norm1_)(r, update_statistics);
  r = gelu(r, options_.gelu);
  r = (*dense2_)(r);
  if (norm2_) r = (*norm2_)(r, update_statistics);
  r = gelu(r, options_.gelu);
  return (*output_)(add(h, r));
}

}  // namespace mixerflow
