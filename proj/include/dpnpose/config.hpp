#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dpnpose {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Arch { dpn, baseline };

std::string_view arch_name(Arch a);
Arch parse_arch(std::string_view s);

/// One frontend entry: a 3x3 conv + relu with `channels` outputs, or a 2x2 max-pool.
struct FrontendLayer {
  bool pool = false;
  int channels = 0;

  bool operator==(const FrontendLayer&) const = default;
};

// VGG-19 conv1_1..conv4_2 followed by the two 512->256->128 reduction convs.
std::vector<FrontendLayer> default_frontend();
std::vector<FrontendLayer> parse_frontend(std::string_view spec);
std::string frontend_to_string(const std::vector<FrontendLayer>& layers);

struct DpnParams {
  int residual = 128;     // r: keypoint-path width
  int dense = 64;         // d0: association-path seed width
  int growth = 48;        // g: association channels appended per block
  int bottleneck = 256;   // w: internal width of the block
  int cardinality = 32;   // G: groups of the 3x3 conv
  int blocks_first = 2;   // B1
  int blocks = 10;        // B for stages >= 2

  bool operator==(const DpnParams&) const = default;
};

struct BaselineParams {
  int width = 128;
  int first_hidden = 512;
  int first_convs = 3;   // 3x3 convs per branch in stage 1
  int later_convs = 5;   // large-kernel convs per branch in stages >= 2
  int later_kernel = 7;

  bool operator==(const BaselineParams&) const = default;
};

struct NetworkConfig {
  Arch arch = Arch::dpn;
  int stages = 3;
  int keypoints = 19;  // J: heatmap channels, background included as the last one
  int pafs = 38;       // C: two channels per limb
  std::vector<FrontendLayer> frontend = default_frontend();
  bool freeze_frontend = true;
  DpnParams dpn;
  BaselineParams baseline;

  int stride() const;
  int feature_channels() const;
  void validate() const;

  // CPU training profile: quartered frontend, narrow DPN stages.
  static NetworkConfig tiny();

  bool operator==(const NetworkConfig&) const = default;
};

struct Skeleton {
  int keypoints = 5;
  std::vector<std::pair<int, int>> limbs;
  // Rest pose in person-scale units, y pointing down; one point per keypoint.
  std::vector<std::array<double, 2>> rest_pose;

  int limb_count() const { return static_cast<int>(limbs.size()); }
  void validate() const;

  // head, left hand, right hand, left foot, right foot; four limbs from the head.
  static Skeleton stick_figure();

  bool operator==(const Skeleton&) const = default;
};

struct SynthParams {
  int height = 128;
  int width = 128;
  int max_persons = 3;
  Skeleton skeleton = Skeleton::stick_figure();
  double scale_min = 18.0;  // pixels per rest-pose unit
  double scale_max = 26.0;
  double rotation = 0.35;   // max absolute rotation, radians
  double noise = 0.15;      // background noise amplitude
  double min_center_fraction = 0.25;  // person centers >= this * min(H, W) apart
  double min_gap = 0.0;     // pixels between keypoint bounding boxes of distinct persons
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const SynthParams&) const = default;
};

struct TargetParams {
  double sigma = 7.0;          // heatmap Gaussian, image pixels
  double paf_half_width = 1.0;  // in output-stride units

  bool operator==(const TargetParams&) const = default;
};

struct TrainParams {
  int steps = 200;
  int batch = 4;
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  // Linear ramp of the learning rate over the first steps; 0 keeps it constant.
  int warmup_steps = 0;
  int log_interval = 10;
  int n_train = 1000;
  int n_eval = 50;

  float learning_rate_at(int step) const;  // step is 0-based

  bool operator==(const TrainParams&) const = default;
};

struct DecodeParams {
  double peak_threshold = 0.3;
  double connection_threshold = 0.3;
  int samples = 10;
  std::vector<double> scales = {1.0};
  double pck_alpha = 0.2;

  bool operator==(const DecodeParams&) const = default;
};

/// Everything a run needs, read from a plain key=value file.
struct ProjectConfig {
  std::uint64_t seed = 1;
  NetworkConfig network;
  SynthParams synth;
  TargetParams targets;
  TrainParams train;
  DecodeParams decode;

  // Unknown keys, malformed values and duplicate keys are errors.
  static ProjectConfig parse(std::string_view text, std::string_view source = "<config>");
  static ProjectConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  // Network heads must match the skeleton: J = keypoints + 1, C = 2 * limbs.
  void validate_for_training() const;

  bool operator==(const ProjectConfig&) const = default;
};

}  // namespace dpnpose
