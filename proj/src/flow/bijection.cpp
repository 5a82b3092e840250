#include "mixerflow/flow/bijection.hpp"

#include <exception>

#include "mixerflow/substrate/errors.hpp"

namespace mixerflow {

Tensor zero_log_det(std::size_t batch) { return Tensor::zeros({batch}); }

void rethrow_with_layer(const std::string& path) {
  try {
    throw;
  } catch (const NumericError& e) {
    const std::string what = e.what();
    if (what.rfind("[layer ", 0) == 0) throw;
    throw NumericError("[layer " + path + "] " + what);
  } catch (const ConditioningError& e) {
    const std::string what = e.what();
    if (what.rfind("[layer ", 0) == 0) throw;
    throw ConditioningError("[layer " + path + "] " + what);
  }
}

FlowResult FlowChain::forward(const Tensor& x) {
  Tensor current = x;
  Tensor log_det = zero_log_det(x.dim(0));
  for (Bijection* layer : layers_) {
    try {
      FlowResult r = layer->forward(current);
      current = r.output;
      log_det = add(log_det, r.log_det);
    } catch (const NumericError&) {
      rethrow_with_layer(layer->path());
    } catch (const ConditioningError&) {
      rethrow_with_layer(layer->path());
    }
  }
  return {current, log_det};
}

Tensor FlowChain::inverse(const Tensor& z) {
  Tensor current = z;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    try {
      current = (*it)->inverse(current);
    } catch (const NumericError&) {
      rethrow_with_layer((*it)->path());
    } catch (const ConditioningError&) {
      rethrow_with_layer((*it)->path());
    }
  }
  return current;
}

bool FlowChain::initialized() const {
  for (const Bijection* layer : layers_) {
    if (!layer->initialized()) return false;
  }
  return true;
}

void FlowChain::visit(const std::function<void(Bijection&)>& fn) {
  fn(*this);
  for (Bijection* layer : layers_) layer->visit(fn);
}

}  // namespace mixerflow
