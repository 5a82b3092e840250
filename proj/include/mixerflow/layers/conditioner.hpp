#pragma once

#include <cstddef>
#include <memory>

#include "mixerflow/layers/dense.hpp"

namespace mixerflow {

/// Maps the untouched part of a row, [n, in], to raw coupling parameters, [n, out].
class Conditioner : public Module {
 public:
  using Module::Module;

  virtual Tensor operator()(const Tensor& x, bool update_statistics) = 0;
  virtual std::size_t in() const = 0;
  virtual std::size_t out() const = 0;
};

struct ConditionerOptions {
  std::size_t hidden = 128;
  bool normalize = true;
  GeluKind gelu = GeluKind::exact;
};

/// h = in(x); r = gelu(norm(dense(gelu(norm(dense(h)))))); out(h + r), with the output layer
/// starting at zero so the coupling starts as the identity.
class ResidualConditioner : public Conditioner {
 public:
  ResidualConditioner(std::string path, std::size_t in, std::size_t out, const ConditionerOptions& options, Rng& rng);

  Tensor operator()(const Tensor& x, bool update_statistics) override;
  std::size_t in() const override { return in_; }
  std::size_t out() const override { return out_; }

  Dense& output_layer() { return *output_; }

 private:
  std::size_t in_;
  std::size_t out_;
  ConditionerOptions options_;
  Dense* input_;
  Dense* dense1_;
  Dense* dense2_;
  FeatureNorm* norm1_ = nullptr;
  FeatureNorm* norm2_ = nullptr;
  Dense* output_;
};

}  // namespace mixerflow
