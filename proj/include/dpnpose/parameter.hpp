#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpnpose/tensor.hpp"

namespace dpnpose {

/// A named trainable tensor. Frozen parameters never require gradients and
/// are never touched by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;
  bool frozen = false;

  bool requires_grad() const { return !frozen; }
};

/// Ordered, name-addressable collection. Pointers into it stay valid because
/// parameters are stored in stable heap nodes.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool frozen = false);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  std::size_t element_count() const;
  void zero_grads();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

}  // namespace dpnpose
