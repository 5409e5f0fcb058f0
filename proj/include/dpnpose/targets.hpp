#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/tensor.hpp"

namespace dpnpose {

struct Keypoint {
  double x = 0.0;  // image pixels
  double y = 0.0;
  bool visible = false;

  bool operator==(const Keypoint&) const = default;
};

struct SceneAnnotation {
  int height = 0;
  int width = 0;
  std::vector<std::vector<Keypoint>> persons;
  std::vector<std::pair<int, int>> limbs;

  int keypoint_types() const;
  // Visible keypoints inside [0,W)x[0,H), limb indices valid, every person
  // has the same keypoint count.
  void validate() const;

  bool operator==(const SceneAnnotation&) const = default;
};

/// Ground truth at network output resolution. heatmaps is [J, H/s, W/s]
/// with J = keypoint types + 1 (background last); pafs is [C, H/s, W/s]
/// with C = 2 * limbs. Output pixel p corresponds to image point p * s.
struct TargetMaps {
  Tensor heatmaps;
  Tensor pafs;
};

// Per type: max over persons of exp(-|p*s - x|^2 / (2 sigma^2)) over visible
// keypoints. Background = clamp(1 - max over the other channels, 0, 1).
Tensor render_heatmaps(const SceneAnnotation& ann, int stride, double sigma);

// Limb c from A to B writes unit(B - A) into channels (2c, 2c+1) wherever the
// image point lies within [0, |B-A|] along the limb and within half_width
// pixels across it. Overlapping same-limb coverage is averaged.
Tensor render_pafs(const SceneAnnotation& ann, int stride, double half_width);

TargetMaps render_targets(const SceneAnnotation& ann, int stride, const TargetParams& params);

// One person per line, space-separated "x,y,v" triples (v is 0 or 1).
std::string annotation_to_text(const SceneAnnotation& ann);
SceneAnnotation annotation_from_text(std::string_view text, int height, int width,
                                     std::vector<std::pair<int, int>> limbs);

}  // namespace dpnpose
