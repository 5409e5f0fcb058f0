#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/graph.hpp"
#include "dpnpose/optim.hpp"
#include "dpnpose/posenet.hpp"
#include "dpnpose/synthdata.hpp"
#include "dpnpose/targets.hpp"

namespace dpnpose {

template <typename T>
struct StageLossVars {
  typename Graph<T>::Var heatmaps;  // f_S
  typename Graph<T>::Var pafs;      // f_L
};

/// f_S = sum_j sum_p (S_j(p) - S*_j(p))^2 and likewise f_L; plain sums of
/// squared differences, no weights, no masking.
template <typename T>
StageLossVars<T> stage_losses(Graph<T>& g, const StageVars<T>& out,
                              typename Graph<T>::Var target_heatmaps,
                              typename Graph<T>::Var target_pafs);

/// Unweighted sum over stages of f_S + f_L (intermediate supervision).
template <typename T>
typename Graph<T>::Var total_loss(Graph<T>& g, std::span<const StageVars<T>> outputs,
                                  typename Graph<T>::Var target_heatmaps,
                                  typename Graph<T>::Var target_pafs);

struct StageLossValues {
  double heatmaps = 0.0;
  double pafs = 0.0;
};

// Value-level wrapper over the graph op, for evaluation and tests.
StageLossValues stage_losses(const StageOutput& out, const TargetMaps& targets);

// [N, C, h, w] from N maps of shape [C, h, w].
Tensor stack_maps(std::span<const Tensor> maps);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossRecord {
  int step = 0;  // 1-based step at the end of the interval
  double total = 0.0;
  std::vector<double> heatmaps;  // f_S per stage
  std::vector<double> pafs;      // f_L per stage
};

// Tab-separated: step, total, f_S per stage, f_L per stage.
void write_loss_header(std::ostream& os, int stages);
void write_loss_record(std::ostream& os, const LossRecord& r);

/// SGD training on the synthetic training split. With a frozen frontend the
/// features of each training scene are computed once and cached.
class Trainer {
 public:
  explicit Trainer(ProjectConfig config);

  // One optimizer step; returns the losses of that step's batch.
  LossRecord step();
  // Runs the remaining configured steps, returning one record per log interval
  // (mean over the interval). Rows are also written to `log` if given.
  std::vector<LossRecord> run(std::ostream* log = nullptr);

  const ProjectConfig& config() const { return config_; }
  PoseNetwork& network() { return *network_; }
  OptimizerState& optimizer() { return optimizer_; }
  const OptimizerState& optimizer() const { return optimizer_; }
  int steps_done() const { return steps_done_; }

 private:
  struct Sample {
    Tensor input;  // features when cached, else the image
    TargetMaps targets;
  };
  const Sample& sample(std::uint64_t index);

  ProjectConfig config_;
  std::unique_ptr<PoseNetwork> network_;
  OptimizerState optimizer_;
  Split split_;
  bool cache_features_ = false;
  std::unordered_map<std::uint64_t, Sample> cache_;
  int steps_done_ = 0;
};

}  // namespace dpnpose
