#include "mixerflow/substrate/module.hpp"

namespace mixerflow {

Module::Module(std::string path) : path_(std::move(path)) {}

std::string Module::child_path(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

Parameter& Module::add_parameter(const std::string& name, Tensor init) {
  Tensor leaf = Tensor::parameter(init.shape(), std::vector<double>(init.values().begin(), init.values().end()));
  params_.push_back(Parameter{child_path(name), std::move(leaf)});
  return params_.back();
}

Buffer& Module::add_buffer(const std::string& name, Tensor init) {
  buffers_.push_back(Buffer{child_path(name), std::move(init)});
  return buffers_.back();
}

void Module::collect(std::vector<Parameter*>& params, std::vector<Buffer*>& buffers) {
  for (auto& p : params_) params.push_back(&p);
  for (auto& b : buffers_) buffers.push_back(&b);
  for (Module* c : children_) c->collect(params, buffers);
}

std::vector<Parameter*> Module::parameters() {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
  collect(params, buffers);
  return params;
}

std::vector<Buffer*> Module::buffers() {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
  collect(params, buffers);
  return buffers;
}

std::size_t Module::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.numel();
  return n;
}

void Module::set_training(bool on) {
  training_ = on;
  for (Module* c : children_) c->set_training(on);
}

}  // namespace mixerflow
