#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mixerflow/substrate/module.hpp"
#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

/// Output of a forward pass: the transformed batch and log|det ∂f/∂x| per sample, shape [batch].
struct FlowResult {
  Tensor output;
  Tensor log_det;
};

/// An invertible map. "forward" always runs data -> latent.
class Bijection : public Module {
 public:
  using Module::Module;

  virtual FlowResult forward(const Tensor& x) = 0;
  virtual Tensor inverse(const Tensor& z) = 0;

  /// False while a data-dependent member still waits for its first batch.
  virtual bool initialized() const { return true; }
  /// Calls `fn` on this bijection and every nested one, depth first.
  virtual void visit(const std::function<void(Bijection&)>& fn) { fn(*this); }
};

/// Zero log-determinant for a batch of the given extent.
Tensor zero_log_det(std::size_t batch);

/// Sequential composition; member log-determinants add up and the inverse runs in reverse.
class FlowChain : public Bijection {
 public:
  explicit FlowChain(std::string path) : Bijection(std::move(path)) {}

  template <typename B>
  B& append(std::unique_ptr<B> layer) {
    B& ref = adopt(std::move(layer));
    layers_.push_back(&ref);
    return ref;
  }

  FlowResult forward(const Tensor& x) override;
  Tensor inverse(const Tensor& z) override;
  bool initialized() const override;
  void visit(const std::function<void(Bijection&)>& fn) override;

  std::size_t size() const { return layers_.size(); }
  Bijection& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<Bijection*> layers_;
};

/// Rethrows numeric failures with the path of the innermost layer attached.
[[noreturn]] void rethrow_with_layer(const std::string& path);

}  // namespace mixerflow
