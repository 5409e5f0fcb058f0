#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "dpnpose/kernels.hpp"
#include "dpnpose/parameter.hpp"
#include "dpnpose/tensor.hpp"

namespace dpnpose {

struct GraphOptions {
  // When false, nothing requires grad and no backward closures are kept.
  bool enable_grad = true;
  // backward() adds the gradient of every bound parameter into Parameter::grad.
  bool write_parameter_grads = true;
  // Hash relu masks and pool argmax choices so callers can detect when a
  // perturbation crossed a non-differentiable point.
  bool trace_kinks = false;
};

/// Reverse-mode differentiation tape. Nodes are appended in creation order,
/// which is a topological order since every op only references existing
/// nodes; backward walks them in exact reverse.
template <typename T>
class Graph {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  explicit Graph(GraphOptions options = {});
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var constant(BasicTensor<T> value);
  Var leaf(BasicTensor<T> value, bool requires_grad);
  // One leaf per parameter per graph; repeated calls return the same Var.
  Var parameter(Parameter& p);
  // Replaces the value a parameter binds to in this graph (e.g. a 64-bit
  // perturbed copy). Must be called before parameter(p).
  void override_parameter(const Parameter& p, BasicTensor<T> value);

  // Differentiable ops.
  Var conv2d(Var x, Var weight, Var bias, int stride, int padding, int groups);
  Var relu(Var x);
  Var add(Var a, Var b);
  Var concat(std::span<const Var> parts);
  Var slice_channels(Var x, int begin, int count);
  Var max_pool2x2(Var x);
  Var sse(Var pred, Var target);
  Var sum(Var x);

  const BasicTensor<T>& value(Var v) const;
  // Gradient accumulated by backward(); zeros if v was not reached.
  BasicTensor<T> grad(Var v) const;
  bool requires_grad(Var v) const;

  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t kink_hash() const { return kink_hash_; }

 private:
  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;  // empty until something flows in
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    std::function<void(Graph&, Node&)> backward;
    Parameter* param = nullptr;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  std::span<T> grad_buffer(std::size_t id);
  void mix_kink(std::uint64_t v);

  GraphOptions options_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<const Parameter*, std::size_t> param_nodes_;
  std::map<const Parameter*, BasicTensor<T>> overrides_;
  bool backward_done_ = false;
  std::uint64_t kink_hash_ = 1469598103934665603ull;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace dpnpose
