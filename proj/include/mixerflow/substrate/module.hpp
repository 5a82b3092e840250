#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "mixerflow/substrate/tensor.hpp"

namespace mixerflow {

/// Owner of named parameters and buffers, arranged in a tree whose paths become
/// parameter names such as "layer.3.channel.1.coupling.residual.dense1.weight".
class Module {
 public:
  explicit Module(std::string path);
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const std::string& path() const { return path_; }

  /// All parameters in this subtree, in registration order.
  std::vector<Parameter*> parameters();
  std::vector<Buffer*> buffers();
  std::size_t parameter_count();

  void set_training(bool on);
  bool training() const { return training_; }

 protected:
  Parameter& add_parameter(const std::string& name, Tensor init);
  Buffer& add_buffer(const std::string& name, Tensor init);
  /// Registers a child this module owns.
  template <typename M>
  M& adopt(std::unique_ptr<M> child) {
    M& ref = *child;
    children_.push_back(&ref);
    owned_.push_back(std::move(child));
    return ref;
  }
  std::string child_path(const std::string& name) const;

 private:
  void collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers);

  std::string path_;
  bool training_ = true;
  std::deque<Parameter> params_;
  std::deque<Buffer> buffers_;
  std::vector<std::unique_ptr<Module>> owned_;
  std::vector<Module*> children_;
};

}  // namespace mixerflow
