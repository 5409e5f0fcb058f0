#include "dpnpose/graph.hpp"

#include <stdexcept>
#include <string>

namespace dpnpose {

namespace {

void require_rank4(const Shape& s, const char* op) {
  if (s.size() != 4) {
    throw ShapeError(std::string(op) + ": expected an NCHW tensor, got shape " + shape_str(s));
  }
}

const char* kAxisNames[] = {"batch", "channel", "height", "width"};

}  // namespace

template <typename T>
Graph<T>::Graph(GraphOptions options) : options_(options) {}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("graph: unknown variable");
  return *nodes_[v.id];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("graph: unknown variable");
  return *nodes_[v.id];
}

template <typename T>
typename Graph<T>::Var Graph<T>::push(Node n) {
  if (!options_.enable_grad) {
    n.requires_grad = false;
    n.backward = nullptr;
  }
  if (!n.requires_grad) n.backward = nullptr;
  nodes_.push_back(std::make_unique<Node>(std::move(n)));
  return Var{nodes_.size() - 1};
}

template <typename T>
std::span<T> Graph<T>::grad_buffer(std::size_t id) {
  Node& n = *nodes_[id];
  if (n.grad.empty()) n.grad = BasicTensor<T>(n.value.shape());
  return n.grad.data();
}

template <typename T>
void Graph<T>::mix_kink(std::uint64_t v) {
  kink_hash_ ^= v;
  kink_hash_ *= 1099511628211ull;
}

template <typename T>
typename Graph<T>::Var Graph<T>::constant(BasicTensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::leaf(BasicTensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  // Leaves have no backward work, but must survive push()'s pruning.
  n.backward = [](Graph&, Node&) {};
  return push(std::move(n));
}

template <typename T>
void Graph<T>::override_parameter(const Parameter& p, BasicTensor<T> value) {
  if (param_nodes_.count(&p)) {
    throw std::logic_error("override_parameter: " + p.name + " is already bound in this graph");
  }
  if (value.shape() != p.value.shape()) {
    throw ShapeError("override_parameter: shape " + shape_str(value.shape()) +
                     " does not match parameter " + p.name + " " + shape_str(p.value.shape()));
  }
  overrides_[&p] = std::move(value);
}

template <typename T>
typename Graph<T>::Var Graph<T>::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  BasicTensor<T> v;
  if (auto it = overrides_.find(&p); it != overrides_.end()) {
    v = it->second;
  } else if constexpr (std::is_same_v<T, float>) {
    v = p.value;
  } else {
    v = p.value.template cast<T>();
  }
  Var var = leaf(std::move(v), p.requires_grad());
  nodes_[var.id]->param = &p;
  param_nodes_[&p] = var.id;
  return var;
}

template <typename T>
typename Graph<T>::Var Graph<T>::conv2d(Var x, Var weight, Var bias, int stride, int padding,
                                        int groups) {
  const Node& xn = node(x);
  const Node& wn = node(weight);
  require_rank4(xn.value.shape(), "conv2d input");
  require_rank4(wn.value.shape(), "conv2d weight");
  ConvGeometry g;
  g.batch = xn.value.dim(0);
  g.in_channels = xn.value.dim(1);
  g.in_h = xn.value.dim(2);
  g.in_w = xn.value.dim(3);
  g.out_channels = wn.value.dim(0);
  g.kernel_h = wn.value.dim(2);
  g.kernel_w = wn.value.dim(3);
  g.stride = stride;
  g.padding = padding;
  g.groups = groups;
  g.validate();
  if (wn.value.dim(1) * groups != g.in_channels) {
    throw ShapeError("conv2d: weight input-channel dimension " + std::to_string(wn.value.dim(1)) +
                     " x groups " + std::to_string(groups) + " does not match input channels " +
                     std::to_string(g.in_channels));
  }
  const bool has_bias = bias.valid();
  if (has_bias) {
    const auto& bs = node(bias).value.shape();
    if (bs.size() != 1 || bs[0] != g.out_channels) {
      throw ShapeError("conv2d: bias shape " + shape_str(bs) + " does not match output channels " +
                       std::to_string(g.out_channels));
    }
  }

  Node n;
  n.value = BasicTensor<T>({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward<T>(g, xn.value.data(), wn.value.data(),
                             has_bias ? node(bias).value.data() : std::span<const T>{},
                             n.value.data());
  n.inputs = {x.id, weight.id};
  if (has_bias) n.inputs.push_back(bias.id);
  n.requires_grad = xn.requires_grad || wn.requires_grad || (has_bias && node(bias).requires_grad);
  n.backward = [g, has_bias](Graph& gr, Node& self) {
    Node& xi = *gr.nodes_[self.inputs[0]];
    Node& wi = *gr.nodes_[self.inputs[1]];
    std::span<T> gx = xi.requires_grad ? gr.grad_buffer(self.inputs[0]) : std::span<T>{};
    std::span<T> gw = wi.requires_grad ? gr.grad_buffer(self.inputs[1]) : std::span<T>{};
    std::span<T> gb;
    if (has_bias && gr.nodes_[self.inputs[2]]->requires_grad) gb = gr.grad_buffer(self.inputs[2]);
    kernels::conv2d_backward<T>(g, xi.value.data(), wi.value.data(), self.grad.data(), gx, gw, gb);
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::relu(Var x) {
  const Node& xn = node(x);
  Node n;
  n.value = BasicTensor<T>(xn.value.shape());
  kernels::relu_forward<T>(xn.value.data(), n.value.data());
  if (options_.trace_kinks) {
    std::uint64_t word = 0;
    std::size_t bits = 0;
    for (T v : xn.value.data()) {
      word = (word << 1) | (v > T(0) ? 1u : 0u);
      if (++bits == 64) {
        mix_kink(word);
        word = 0;
        bits = 0;
      }
    }
    mix_kink(word);
  }
  n.inputs = {x.id};
  n.requires_grad = xn.requires_grad;
  n.backward = [](Graph& gr, Node& self) {
    Node& xi = *gr.nodes_[self.inputs[0]];
    kernels::relu_backward<T>(xi.value.data(), self.grad.data(), gr.grad_buffer(self.inputs[0]));
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::add(Var a, Var b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  const Shape& sa = an.value.shape();
  const Shape& sb = bn.value.shape();
  if (sa.size() != sb.size()) {
    throw ShapeError("add: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i]) {
      const std::string axis = sa.size() == 4 ? kAxisNames[i] : "axis " + std::to_string(i);
      throw ShapeError("add: " + axis + " mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    }
  }
  Node n;
  n.value = BasicTensor<T>(sa);
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = an.value[i] + bn.value[i];
  n.inputs = {a.id, b.id};
  n.requires_grad = an.requires_grad || bn.requires_grad;
  n.backward = [](Graph& gr, Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!gr.nodes_[self.inputs[k]]->requires_grad) continue;
      auto g = gr.grad_buffer(self.inputs[k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = node(parts[0]).value.shape();
  require_rank4(s0, "concat");
  int channels = 0;
  bool rg = false;
  for (const Var& p : parts) {
    const Node& pn = node(p);
    const Shape& s = pn.value.shape();
    require_rank4(s, "concat");
    for (int axis : {0, 2, 3}) {
      if (s[axis] != s0[axis]) {
        throw ShapeError(std::string("concat: ") + kAxisNames[axis] + " mismatch " +
                         shape_str(s0) + " vs " + shape_str(s));
      }
    }
    channels += s[1];
    rg = rg || pn.requires_grad;
  }
  const int batch = s0[0];
  const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
  Node n;
  n.value = BasicTensor<T>({batch, channels, s0[2], s0[3]});
  for (int b = 0; b < batch; ++b) {
    T* dst = n.value.ptr() + static_cast<std::size_t>(b) * channels * plane;
    for (const Var& p : parts) {
      const auto& v = node(p).value;
      const std::size_t chunk = static_cast<std::size_t>(v.dim(1)) * plane;
      std::copy_n(v.ptr() + b * chunk, chunk, dst);
      dst += chunk;
    }
  }
  for (const Var& p : parts) n.inputs.push_back(p.id);
  n.requires_grad = rg;
  n.backward = [batch, channels, plane](Graph& gr, Node& self) {
    std::size_t offset = 0;
    for (std::size_t id : self.inputs) {
      Node& in = *gr.nodes_[id];
      const std::size_t chunk = static_cast<std::size_t>(in.value.dim(1)) * plane;
      if (in.requires_grad) {
        auto g = gr.grad_buffer(id);
        for (int b = 0; b < batch; ++b) {
          const T* src = self.grad.ptr() + b * channels * plane + offset;
          T* dst = g.data() + b * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::slice_channels(Var x, int begin, int count) {
  const Node& xn = node(x);
  require_rank4(xn.value.shape(), "slice_channels");
  const int channels = xn.value.dim(1);
  if (begin < 0 || count <= 0 || begin + count > channels) {
    throw ShapeError("slice_channels: channel range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + std::to_string(channels) +
                     " channels");
  }
  const int batch = xn.value.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xn.value.dim(2)) * xn.value.dim(3);
  Node n;
  n.value = BasicTensor<T>({batch, count, xn.value.dim(2), xn.value.dim(3)});
  for (int b = 0; b < batch; ++b) {
    std::copy_n(xn.value.ptr() + (static_cast<std::size_t>(b) * channels + begin) * plane,
                count * plane, n.value.ptr() + static_cast<std::size_t>(b) * count * plane);
  }
  n.inputs = {x.id};
  n.requires_grad = xn.requires_grad;
  n.backward = [batch, channels, begin, count, plane](Graph& gr, Node& self) {
    auto g = gr.grad_buffer(self.inputs[0]);
    for (int b = 0; b < batch; ++b) {
      T* dst = g.data() + (static_cast<std::size_t>(b) * channels + begin) * plane;
      const T* src = self.grad.ptr() + static_cast<std::size_t>(b) * count * plane;
      for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::max_pool2x2(Var x) {
  const Node& xn = node(x);
  require_rank4(xn.value.shape(), "max_pool2x2");
  const int h = xn.value.dim(2);
  const int w = xn.value.dim(3);
  if (h % 2 != 0) throw ShapeError("max_pool2x2: height " + std::to_string(h) + " is odd");
  if (w % 2 != 0) throw ShapeError("max_pool2x2: width " + std::to_string(w) + " is odd");
  const int planes = xn.value.dim(0) * xn.value.dim(1);
  Node n;
  n.value = BasicTensor<T>({xn.value.dim(0), xn.value.dim(1), h / 2, w / 2});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(n.value.size());
  kernels::max_pool2x2_forward<T>(planes, h, w, xn.value.data(), n.value.data(), *argmax);
  if (options_.trace_kinks) {
    for (std::int32_t i : *argmax) mix_kink(static_cast<std::uint64_t>(i));
  }
  n.inputs = {x.id};
  n.requires_grad = xn.requires_grad;
  n.backward = [argmax](Graph& gr, Node& self) {
    kernels::max_pool2x2_backward<T>(*argmax, self.grad.data(), gr.grad_buffer(self.inputs[0]));
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::sse(Var pred, Var target) {
  const Node& pn = node(pred);
  const Node& tn = node(target);
  if (pn.value.shape() != tn.value.shape()) {
    const Shape& a = pn.value.shape();
    const Shape& b = tn.value.shape();
    std::string where = "rank";
    if (a.size() == b.size()) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) {
          where = a.size() == 4 ? kAxisNames[i] : "axis " + std::to_string(i);
          break;
        }
      }
    }
    throw ShapeError("sse_loss: " + where + " mismatch, prediction " + shape_str(a) +
                     " vs target " + shape_str(b));
  }
  T acc = T(0);
  for (std::size_t i = 0; i < pn.value.size(); ++i) {
    const T d = pn.value[i] - tn.value[i];
    acc += d * d;
  }
  Node n;
  n.value = BasicTensor<T>(Shape{}, acc);
  n.inputs = {pred.id, target.id};
  n.requires_grad = pn.requires_grad || tn.requires_grad;
  n.backward = [](Graph& gr, Node& self) {
    const T g = self.grad[0];
    Node& p = *gr.nodes_[self.inputs[0]];
    Node& t = *gr.nodes_[self.inputs[1]];
    if (p.requires_grad) {
      auto gp = gr.grad_buffer(self.inputs[0]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += T(2) * (p.value[i] - t.value[i]) * g;
    }
    if (t.requires_grad) {
      auto gt = gr.grad_buffer(self.inputs[1]);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= T(2) * (p.value[i] - t.value[i]) * g;
    }
  };
  return push(std::move(n));
}

template <typename T>
typename Graph<T>::Var Graph<T>::sum(Var x) {
  const Node& xn = node(x);
  T acc = T(0);
  for (T v : xn.value.data()) acc += v;
  Node n;
  n.value = BasicTensor<T>(Shape{}, acc);
  n.inputs = {x.id};
  n.requires_grad = xn.requires_grad;
  n.backward = [](Graph& gr, Node& self) {
    auto g = gr.grad_buffer(self.inputs[0]);
    for (auto& v : g) v += self.grad[0];
  };
  return push(std::move(n));
}

template <typename T>
const BasicTensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
BasicTensor<T> Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return BasicTensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) {
    throw std::logic_error("backward: no forward value recorded for the loss node");
  }
  if (backward_done_) throw std::logic_error("backward: already run on this graph");
  Node& ln = *nodes_[loss.id];
  if (ln.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(ln.value.shape()));
  }
  backward_done_ = true;
  if (ln.requires_grad) {
    grad_buffer(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = *nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n);
    }
  }
  if (!options_.enable_grad || !options_.write_parameter_grads) return;
  for (const auto& [param, id] : param_nodes_) {
    Node& n = *nodes_[id];
    if (!n.requires_grad) continue;
    Parameter& p = *n.param;
    if (!p.grad) p.grad = Tensor(p.value.shape());
    if (n.grad.empty()) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*p.grad)[i] += static_cast<float>(n.grad[i]);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace dpnpose
