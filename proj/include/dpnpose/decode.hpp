#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/posenet.hpp"
#include "dpnpose/synthdata.hpp"
#include "dpnpose/targets.hpp"

namespace dpnpose {

struct KeypointCandidate {
  int type = 0;
  double x = 0.0;  // image pixels
  double y = 0.0;
  float score = 0.0f;
};

struct PoseKeypoint {
  double x = 0.0;
  double y = 0.0;
  float score = 0.0f;
};

struct DecodedPose {
  std::vector<std::optional<PoseKeypoint>> keypoints;  // one slot per keypoint type
  double score = 0.0;

  int count() const;
};

/// Local maxima of each non-background channel of heatmaps [J,h,w] (or
/// [1,J,h,w]) with value >= threshold. A pixel is a peak when it is strictly
/// greater than the neighbors before it in scan order and not smaller than
/// those after it, so plateaus yield their first pixel. Coordinates are
/// mapped to image space as p * stride.
std::vector<KeypointCandidate> find_peaks(const Tensor& heatmaps, int stride, double threshold);

/// Mean over n_samples evenly spaced points on a->b of dot(L_c at the nearest
/// output pixel, unit(b - a)). Zero-length segments score 0.
double score_connection(const Tensor& pafs, int limb, const KeypointCandidate& a,
                        const KeypointCandidate& b, int n_samples, int stride);

struct AssemblyParams {
  double connection_threshold = 0.3;
  int samples = 10;
  // Components with fewer keypoints are discarded as strays.
  int min_keypoints = 2;
};

/// Greedy limb matching. Per limb all cross pairs are scored and accepted in
/// descending score order (ties by candidate order) while both ends are
/// unused for that limb and the score clears the threshold. Accepted limbs
/// are merged with union-find, skipping merges that would put two candidates
/// of one type into a single person.
std::vector<DecodedPose> assemble(std::span<const KeypointCandidate> candidates,
                                  const Tensor& pafs,
                                  std::span<const std::pair<int, int>> limbs,
                                  int keypoint_types, int stride,
                                  const AssemblyParams& params);

/// Peaks plus assembly on one set of maps ([J,h,w] / [C,h,w] or batch of one).
std::vector<DecodedPose> decode_maps(const Tensor& heatmaps, const Tensor& pafs,
                                     std::span<const std::pair<int, int>> limbs, int stride,
                                     const DecodeParams& params);

/// Runs the network at each scale and averages the final-stage maps after
/// resampling them back to the base output grid. The scaled image is
/// zero-padded to a multiple of the stride; a scale of exactly 1 is the
/// plain forward path.
StageOutput multi_scale_infer(PoseNetwork& network, const Tensor& image,
                              std::span<const double> scales);

struct PckCounts {
  int correct = 0;
  int total = 0;

  double fraction() const { return total == 0 ? 1.0 : static_cast<double>(correct) / total; }
};

/// Poses are matched greedily to annotated persons by mean distance over
/// shared keypoints. A visible keypoint is correct when its matched pose
/// places it within alpha * (bounding-box diagonal of the person's visible
/// keypoints).
PckCounts pck_counts(std::span<const DecodedPose> poses, const SceneAnnotation& ann, double alpha);
double pck(std::span<const DecodedPose> poses, const SceneAnnotation& ann, double alpha);

/// PCK pooled over the evaluation scenes of `split`, decoded with
/// config.decode (multi-scale when several scales are configured).
PckCounts evaluate_pck(PoseNetwork& network, const ProjectConfig& config, const Split& split);

}  // namespace dpnpose
