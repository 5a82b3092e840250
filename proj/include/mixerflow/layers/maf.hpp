#pragma once

#include <cstddef>

#include "mixerflow/flow/bijection.hpp"
#include "mixerflow/layers/made.hpp"

namespace mixerflow {

/// Masked autoregressive flow over rows of [b, n, k]: y_i = x_i·exp(s_raw_i(x_<i)) + t_i(x_<i).
/// Density evaluation is one network pass; inversion needs k sequential passes.
class MafLayer : public Bijection {
 public:
  MafLayer(std::string path, std::size_t width, const MadeOptions& options, Rng& rng);

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;

  MadeNetwork& made() { return *made_; }

 private:
  std::size_t width_;
  MadeNetwork* made_;
};

}  // namespace mixerflow
