#include "dpnpose/posenet.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dpnpose/rng.hpp"

namespace dpnpose {

template <typename T>
typename Graph<T>::Var ConvLayer::apply(Graph<T>& g, typename Graph<T>::Var x) const {
  const int kernel = weight->value.dim(2);
  auto w = g.parameter(*weight);
  typename Graph<T>::Var b;
  if (bias != nullptr) b = g.parameter(*bias);
  return g.conv2d(x, w, b, 1, same_padding(kernel), groups);
}

template <typename T>
DpnBranches<T> dpn_block(Graph<T>& g, const DpnBranches<T>& in, const DpnBlockLayers& layers) {
  const int kp_channels = g.value(in.kp).dim(1);
  const int ap_channels = g.value(in.ap).dim(1);
  const int expected_in = layers.reduce.weight->value.dim(1);
  if (kp_channels != layers.residual) {
    throw ShapeError("dpn_block: keypoint path has " + std::to_string(kp_channels) +
                     " channels, block expects " + std::to_string(layers.residual));
  }
  if (kp_channels + ap_channels != expected_in) {
    throw ShapeError("dpn_block: association path has " + std::to_string(ap_channels) +
                     " channels, block expects " + std::to_string(expected_in - kp_channels));
  }
  const std::array<typename Graph<T>::Var, 2> both{in.kp, in.ap};
  auto x = g.concat(both);
  x = g.relu(layers.reduce.apply(g, x));
  x = g.relu(layers.grouped.apply(g, x));
  x = layers.expand.apply(g, x);
  auto residual = g.slice_channels(x, 0, layers.residual);
  auto dense = g.slice_channels(x, layers.residual, layers.growth);
  const std::array<typename Graph<T>::Var, 2> grown{in.ap, dense};
  return {g.add(in.kp, residual), g.concat(grown)};
}

namespace {

template <typename T>
typename Graph<T>::Var stage_input(Graph<T>& g, typename Graph<T>::Var features,
                                   const StageVars<T>* prev, int stage, const char* who) {
  if (stage < 1) throw std::invalid_argument(std::string(who) + ": stage index starts at 1");
  if (stage == 1) {
    if (prev != nullptr) {
      throw std::invalid_argument(std::string(who) + ": stage 1 takes no previous output");
    }
    return features;
  }
  if (prev == nullptr) {
    throw std::invalid_argument(std::string(who) + ": stage " + std::to_string(stage) +
                                " needs the previous stage output");
  }
  const std::array<typename Graph<T>::Var, 3> parts{features, prev->heatmaps, prev->pafs};
  return g.concat(parts);
}

void check_input_channels(const ConvLayer& first, int channels, const char* who) {
  const int expected = first.weight->value.dim(1) * first.groups;
  if (channels != expected) {
    throw ShapeError(std::string(who) + ": stage input has " + std::to_string(channels) +
                     " channels, first layer expects " + std::to_string(expected));
  }
}

}  // namespace

template <typename T>
StageVars<T> dpn_stage(Graph<T>& g, typename Graph<T>::Var features, const StageVars<T>* prev,
                       const DpnStageLayers& layers, int stage,
                       std::vector<std::pair<int, int>>* widths) {
  auto x = stage_input(g, features, prev, stage, "dpn_stage");
  check_input_channels(layers.project, g.value(x).dim(1), "dpn_stage");
  x = layers.project.apply(g, x);
  DpnBranches<T> br{g.slice_channels(x, 0, layers.residual),
                    g.slice_channels(x, layers.residual, layers.dense)};
  for (const auto& block : layers.blocks) {
    br = dpn_block(g, br, block);
    if (widths != nullptr) widths->emplace_back(g.value(br.kp).dim(1), g.value(br.ap).dim(1));
  }
  return {layers.head_heatmaps.apply(g, br.kp), layers.head_pafs.apply(g, br.ap)};
}

template <typename T>
StageVars<T> baseline_stage(Graph<T>& g, typename Graph<T>::Var features,
                            const StageVars<T>* prev, const BaselineStageLayers& layers,
                            int stage) {
  auto x = stage_input(g, features, prev, stage, "baseline_stage");
  check_input_channels(layers.heatmap_branch.front(), g.value(x).dim(1), "baseline_stage");
  auto run = [&](const std::vector<ConvLayer>& branch) {
    auto y = x;
    for (std::size_t i = 0; i < branch.size(); ++i) {
      y = branch[i].apply(g, y);
      if (i + 1 < branch.size()) y = g.relu(y);
    }
    return y;
  };
  return {run(layers.heatmap_branch), run(layers.paf_branch)};
}

PoseNetwork::PoseNetwork(NetworkConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const bool freeze = config_.freeze_frontend;

  int channels = 3;
  int conv_index = 0;
  for (const auto& l : config_.frontend) {
    if (l.pool) {
      frontend_.push_back({true, {}});
      continue;
    }
    ++conv_index;
    frontend_.push_back(
        {false, make_conv("frontend.conv" + std::to_string(conv_index), channels, l.channels, 3, 1, freeze)});
    channels = l.channels;
  }

  const int feat = config_.feature_channels();
  const int J = config_.keypoints;
  const int C = config_.pafs;
  for (int t = 1; t <= config_.stages; ++t) {
    const std::size_t before = params_.size();
    const std::string prefix = "stage" + std::to_string(t) + ".";
    const int in = t == 1 ? feat : feat + J + C;
    if (config_.arch == Arch::dpn) {
      const DpnParams& p = config_.dpn;
      DpnStageLayers s;
      s.residual = p.residual;
      s.dense = p.dense;
      s.project = make_conv(prefix + "project", in, p.residual + p.dense, 1, 1, false);
      const int blocks = t == 1 ? p.blocks_first : p.blocks;
      for (int b = 1; b <= blocks; ++b) {
        const std::string bp = prefix + "block" + std::to_string(b) + ".";
        const int block_in = p.residual + p.dense + (b - 1) * p.growth;
        DpnBlockLayers bl;
        bl.residual = p.residual;
        bl.growth = p.growth;
        bl.reduce = make_conv(bp + "reduce", block_in, p.bottleneck, 1, 1, false);
        bl.grouped = make_conv(bp + "grouped", p.bottleneck, p.bottleneck, 3, p.cardinality, false);
        bl.expand = make_conv(bp + "expand", p.bottleneck, p.residual + p.growth, 1, 1, false);
        s.blocks.push_back(bl);
      }
      s.head_heatmaps = make_conv(prefix + "head_heatmaps", p.residual, J, 1, 1, false);
      s.head_pafs = make_conv(prefix + "head_pafs", p.dense + blocks * p.growth, C, 1, 1, false);
      dpn_.push_back(std::move(s));
    } else {
      const BaselineParams& p = config_.baseline;
      BaselineStageLayers s;
      for (int branch = 0; branch < 2; ++branch) {
        const std::string bp = prefix + (branch == 0 ? "heatmaps." : "pafs.");
        const int out = branch == 0 ? J : C;
        std::vector<ConvLayer> layers;
        int c = in;
        const int convs = t == 1 ? p.first_convs : p.later_convs;
        const int kernel = t == 1 ? 3 : p.later_kernel;
        for (int i = 1; i <= convs; ++i) {
          layers.push_back(make_conv(bp + "conv" + std::to_string(i), c, p.width, kernel, 1, false));
          c = p.width;
        }
        const int hidden = t == 1 ? p.first_hidden : p.width;
        layers.push_back(make_conv(bp + "conv" + std::to_string(convs + 1), c, hidden, 1, 1, false));
        layers.push_back(make_conv(bp + "head", hidden, out, 1, 1, false));
        (branch == 0 ? s.heatmap_branch : s.paf_branch) = std::move(layers);
      }
      baseline_.push_back(std::move(s));
    }
    std::vector<Parameter*> sp;
    for (std::size_t i = before; i < params_.size(); ++i) sp.push_back(&params_[i]);
    stage_params_.push_back(std::move(sp));
  }
}

ConvLayer PoseNetwork::make_conv(const std::string& name, int in, int out, int kernel, int groups,
                                 bool frozen) {
  const int in_per_group = in / groups;
  const int fan_in = in_per_group * kernel * kernel;
  Tensor w({out, in_per_group, kernel, kernel});
  SplitMix64 rng(seed_, init_counter_++);
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (auto& v : w.data()) v = static_cast<float>(std_dev * rng.normal());
  ConvLayer layer;
  layer.weight = &params_.add(name + ".weight", std::move(w), frozen);
  layer.bias = &params_.add(name + ".bias", Tensor({out}), frozen);
  layer.groups = groups;
  return layer;
}

std::vector<Parameter*> PoseNetwork::frontend_parameters() {
  std::vector<Parameter*> out;
  for (const auto& s : frontend_) {
    if (s.pool) continue;
    out.push_back(s.conv.weight);
    out.push_back(s.conv.bias);
  }
  return out;
}

std::vector<Parameter*> PoseNetwork::stage_parameters(int stage) {
  if (stage < 1 || stage > config_.stages) {
    throw std::out_of_range("stage_parameters: stage " + std::to_string(stage) + " out of range");
  }
  return stage_params_[stage - 1];
}

template <typename T>
typename Graph<T>::Var PoseNetwork::features(Graph<T>& g, typename Graph<T>::Var images) {
  const auto& s = g.value(images).shape();
  if (s.size() != 4) throw ShapeError("forward: images must be [N,3,H,W], got " + shape_str(s));
  if (s[1] != 3) throw ShapeError("forward: images must have 3 channels, got " + std::to_string(s[1]));
  const int stride = config_.stride();
  if (s[2] % stride != 0) {
    throw ShapeError("forward: image height " + std::to_string(s[2]) + " not divisible by " +
                     std::to_string(stride));
  }
  if (s[3] % stride != 0) {
    throw ShapeError("forward: image width " + std::to_string(s[3]) + " not divisible by " +
                     std::to_string(stride));
  }
  auto x = images;
  for (const auto& step : frontend_) {
    x = step.pool ? g.max_pool2x2(x) : g.relu(step.conv.apply(g, x));
  }
  return x;
}

template <typename T>
std::vector<StageVars<T>> PoseNetwork::run_stages(Graph<T>& g, typename Graph<T>::Var features) {
  std::vector<StageVars<T>> out;
  out.reserve(config_.stages);
  for (int t = 1; t <= config_.stages; ++t) {
    const StageVars<T>* prev = t == 1 ? nullptr : &out.back();
    StageVars<T> s = config_.arch == Arch::dpn
                         ? dpn_stage(g, features, prev, dpn_[t - 1], t)
                         : baseline_stage(g, features, prev, baseline_[t - 1], t);
    out.push_back(s);
  }
  return out;
}

template <typename T>
std::vector<StageVars<T>> PoseNetwork::forward(Graph<T>& g, typename Graph<T>::Var images) {
  return run_stages(g, features(g, images));
}

Tensor PoseNetwork::compute_features(const Tensor& images) {
  Graph<float> g(GraphOptions{.enable_grad = false});
  return g.value(features(g, g.constant(images)));
}

std::vector<StageOutput> PoseNetwork::infer(const Tensor& images) {
  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto stages = forward(g, g.constant(images));
  std::vector<StageOutput> out;
  for (const auto& s : stages) out.push_back({g.value(s.heatmaps), g.value(s.pafs)});
  return out;
}

std::vector<StageOutput> PoseNetwork::infer_from_features(const Tensor& feats) {
  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto stages = run_stages(g, g.constant(feats));
  std::vector<StageOutput> out;
  for (const auto& s : stages) out.push_back({g.value(s.heatmaps), g.value(s.pafs)});
  return out;
}

#define DPNPOSE_INSTANTIATE_POSENET(T)                                                          \
  template Graph<T>::Var ConvLayer::apply<T>(Graph<T>&, Graph<T>::Var) const;                   \
  template DpnBranches<T> dpn_block<T>(Graph<T>&, const DpnBranches<T>&, const DpnBlockLayers&); \
  template StageVars<T> dpn_stage<T>(Graph<T>&, Graph<T>::Var, const StageVars<T>*,             \
                                     const DpnStageLayers&, int,                                \
                                     std::vector<std::pair<int, int>>*);                         \
  template StageVars<T> baseline_stage<T>(Graph<T>&, Graph<T>::Var, const StageVars<T>*,        \
                                          const BaselineStageLayers&, int);                     \
  template Graph<T>::Var PoseNetwork::features<T>(Graph<T>&, Graph<T>::Var);                    \
  template std::vector<StageVars<T>> PoseNetwork::run_stages<T>(Graph<T>&, Graph<T>::Var);      \
  template std::vector<StageVars<T>> PoseNetwork::forward<T>(Graph<T>&, Graph<T>::Var);

DPNPOSE_INSTANTIATE_POSENET(float)
DPNPOSE_INSTANTIATE_POSENET(double)

}  // namespace dpnpose
