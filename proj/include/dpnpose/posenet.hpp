#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/graph.hpp"
#include "dpnpose/parameter.hpp"

namespace dpnpose {

/// Convolution bound to its parameters. Padding is always "same".
struct ConvLayer {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int groups = 1;

  template <typename T>
  typename Graph<T>::Var apply(Graph<T>& g, typename Graph<T>::Var x) const;
};

template <typename T>
struct StageVars {
  typename Graph<T>::Var heatmaps;  // S, J channels
  typename Graph<T>::Var pafs;      // L, C channels
};

template <typename T>
struct DpnBranches {
  typename Graph<T>::Var kp;  // keypoints path, constant width r
  typename Graph<T>::Var ap;  // association path, grows by g per block
};

struct DpnBlockLayers {
  ConvLayer reduce;   // 1x1, (kp + ap) -> w
  ConvLayer grouped;  // 3x3, w -> w, G groups
  ConvLayer expand;   // 1x1, w -> r + g
  int residual = 0;
  int growth = 0;
};

struct DpnStageLayers {
  ConvLayer project;  // 1x1 stage input -> r + d0
  std::vector<DpnBlockLayers> blocks;
  ConvLayer head_heatmaps;
  ConvLayer head_pafs;
  int residual = 0;
  int dense = 0;
};

// Per branch: relu after every conv except the last.
struct BaselineStageLayers {
  std::vector<ConvLayer> heatmap_branch;
  std::vector<ConvLayer> paf_branch;
};

struct FrontendStep {
  bool pool = false;
  ConvLayer conv;
};

/// One DPN block: x = concat(kp, ap) -> 1x1 -> relu -> grouped 3x3 -> relu
/// -> 1x1 to r + g channels. The first r channels are added onto kp, the last
/// g are concatenated onto ap.
template <typename T>
DpnBranches<T> dpn_block(Graph<T>& g, const DpnBranches<T>& in, const DpnBlockLayers& layers);

/// `prev` must be null for the first stage and present afterwards. When
/// `widths` is given it receives (kp, ap) channel counts after each block.
template <typename T>
StageVars<T> dpn_stage(Graph<T>& g, typename Graph<T>::Var features, const StageVars<T>* prev,
                       const DpnStageLayers& layers, int stage,
                       std::vector<std::pair<int, int>>* widths = nullptr);

template <typename T>
StageVars<T> baseline_stage(Graph<T>& g, typename Graph<T>::Var features,
                            const StageVars<T>* prev, const BaselineStageLayers& layers,
                            int stage);

/// Plain (non-graph) copy of one stage's predictions.
struct StageOutput {
  Tensor heatmaps;
  Tensor pafs;
};

class PoseNetwork {
 public:
  PoseNetwork(NetworkConfig config, std::uint64_t seed);
  PoseNetwork(const PoseNetwork&) = delete;
  PoseNetwork& operator=(const PoseNetwork&) = delete;

  const NetworkConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::vector<Parameter*> frontend_parameters();
  std::vector<Parameter*> stage_parameters(int stage);

  // Frontend: images [N,3,H,W] with H, W divisible by 8 -> F [N,Cf,H/8,W/8].
  template <typename T>
  typename Graph<T>::Var features(Graph<T>& g, typename Graph<T>::Var images);

  // All stages from precomputed features; F is fanned out to every stage.
  template <typename T>
  std::vector<StageVars<T>> run_stages(Graph<T>& g, typename Graph<T>::Var features);

  template <typename T>
  std::vector<StageVars<T>> forward(Graph<T>& g, typename Graph<T>::Var images);

  // Gradient-free convenience wrappers.
  Tensor compute_features(const Tensor& images);
  std::vector<StageOutput> infer(const Tensor& images);
  std::vector<StageOutput> infer_from_features(const Tensor& features);

  const std::vector<DpnStageLayers>& dpn_stages() const { return dpn_; }
  const std::vector<BaselineStageLayers>& baseline_stages() const { return baseline_; }

 private:
  ConvLayer make_conv(const std::string& name, int in, int out, int kernel, int groups,
                      bool frozen);

  NetworkConfig config_;
  ParameterSet params_;
  std::vector<FrontendStep> frontend_;
  std::vector<DpnStageLayers> dpn_;
  std::vector<BaselineStageLayers> baseline_;
  std::vector<std::vector<Parameter*>> stage_params_;
  std::uint64_t seed_;
  std::uint64_t init_counter_ = 0;
};

}  // namespace dpnpose
