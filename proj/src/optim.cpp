#include "dpnpose/optim.hpp"

#include <stdexcept>

namespace dpnpose {

void sgd_step(OptimizerState& state, std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (!state.is_frozen(*p) && !p->grad) {
      throw std::logic_error("sgd_step: parameter " + p->name + " has no gradient");
    }
  }
  const float lr = state.learning_rate;
  const float mu = state.momentum;
  for (Parameter* p : params) {
    if (state.is_frozen(*p)) {
      p->grad.reset();
      continue;
    }
    auto [it, inserted] = state.velocity.try_emplace(p->name, p->value.shape());
    Tensor& v = it->second;
    if (v.shape() != p->value.shape()) {
      throw ShapeError("sgd_step: momentum buffer for " + p->name + " has shape " +
                       shape_str(v.shape()) + ", parameter has " + shape_str(p->value.shape()));
    }
    const Tensor& g = *p->grad;
    auto theta = p->value.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = mu * v[i] + g[i];
      theta[i] -= lr * v[i];
    }
    p->grad.reset();
  }
}

}  // namespace dpnpose
