#pragma once

#include <map>
#include <set>
#include <span>
#include <string>

#include "dpnpose/parameter.hpp"

namespace dpnpose {

/// SGD with classical momentum: v <- mu * v + grad; theta <- theta - lr * v.
struct OptimizerState {
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  std::map<std::string, Tensor> velocity;
  // Names excluded from updates in addition to Parameter::frozen.
  std::set<std::string> frozen;

  bool is_frozen(const Parameter& p) const { return p.frozen || frozen.count(p.name) > 0; }
};

// Updates every non-frozen parameter, then clears all gradients. Throws
// std::logic_error naming the first non-frozen parameter without a gradient.
void sgd_step(OptimizerState& state, std::span<Parameter* const> params);

}  // namespace dpnpose
