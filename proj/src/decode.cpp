#include "dpnpose/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "dpnpose/kernels.hpp"

namespace dpnpose {

int DecodedPose::count() const {
  int n = 0;
  for (const auto& k : keypoints) n += k.has_value() ? 1 : 0;
  return n;
}

namespace {

// Accepts [C,h,w] or [1,C,h,w].
const Shape map_shape(const Tensor& t, const char* who) {
  if (t.rank() == 3) return t.shape();
  if (t.rank() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(std::string(who) + ": expected [C,h,w] or [1,C,h,w], got " + shape_str(t.shape()));
}

}  // namespace

std::vector<KeypointCandidate> find_peaks(const Tensor& heatmaps, int stride, double threshold) {
  const Shape s = map_shape(heatmaps, "find_peaks");
  const int channels = s[0] - 1;  // last channel is background
  const int h = s[1];
  const int w = s[2];
  std::vector<KeypointCandidate> out;
  for (int c = 0; c < channels; ++c) {
    const float* m = heatmaps.ptr() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = m[y * w + x];
        if (!(v >= threshold)) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy) {
          for (int dx = -1; dx <= 1 && peak; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int ny = y + dy;
            const int nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const float n = m[ny * w + nx];
            const bool before = dy < 0 || (dy == 0 && dx < 0);
            peak = before ? v > n : v >= n;
          }
        }
        if (peak) out.push_back({c, static_cast<double>(x) * stride, static_cast<double>(y) * stride, v});
      }
    }
  }
  return out;
}

double score_connection(const Tensor& pafs, int limb, const KeypointCandidate& a,
                        const KeypointCandidate& b, int n_samples, int stride) {
  if (n_samples < 2) throw std::invalid_argument("score_connection: need at least 2 samples");
  const Shape s = map_shape(pafs, "score_connection");
  if (limb < 0 || 2 * limb + 1 >= s[0]) {
    throw std::out_of_range("score_connection: limb " + std::to_string(limb) + " out of range");
  }
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return 0.0;
  const double ux = dx / len;
  const double uy = dy / len;
  const int h = s[1];
  const int w = s[2];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const float* lx = pafs.ptr() + (2 * limb) * plane;
  const float* ly = pafs.ptr() + (2 * limb + 1) * plane;
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / (n_samples - 1);
    const int px = std::clamp(static_cast<int>(std::lround((a.x + t * dx) / stride)), 0, w - 1);
    const int py = std::clamp(static_cast<int>(std::lround((a.y + t * dy) / stride)), 0, h - 1);
    const std::size_t idx = static_cast<std::size_t>(py) * w + px;
    acc += lx[idx] * ux + ly[idx] * uy;
  }
  return acc / n_samples;
}

std::vector<DecodedPose> assemble(std::span<const KeypointCandidate> candidates,
                                  const Tensor& pafs,
                                  std::span<const std::pair<int, int>> limbs,
                                  int keypoint_types, int stride,
                                  const AssemblyParams& params) {
  const int n = static_cast<int>(candidates.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  // Bitmask of keypoint types present in each component root.
  std::vector<std::vector<bool>> types(n, std::vector<bool>(keypoint_types, false));
  for (int i = 0; i < n; ++i) types[i][candidates[i].type] = true;
  std::vector<double> link_score(n, 0.0);

  auto find = [&](int i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };

  for (int c = 0; c < static_cast<int>(limbs.size()); ++c) {
    const auto [ta, tb] = limbs[c];
    struct Pair {
      double score;
      int a, b;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < n; ++i) {
      if (candidates[i].type != ta) continue;
      for (int j = 0; j < n; ++j) {
        if (candidates[j].type != tb) continue;
        const double s = score_connection(pafs, c, candidates[i], candidates[j], params.samples, stride);
        if (s >= params.connection_threshold) pairs.push_back({s, i, j});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
      return std::tie(y.score, x.a, x.b) < std::tie(x.score, y.a, y.b);
    });
    std::vector<bool> used(n, false);
    for (const Pair& p : pairs) {
      if (used[p.a] || used[p.b]) continue;
      const int ra = find(p.a);
      const int rb = find(p.b);
      if (ra != rb) {
        bool clash = false;
        for (int t = 0; t < keypoint_types && !clash; ++t) clash = types[ra][t] && types[rb][t];
        if (clash) continue;
        const int root = std::min(ra, rb);
        const int other = std::max(ra, rb);
        parent[other] = root;
        for (int t = 0; t < keypoint_types; ++t) types[root][t] = types[root][t] || types[other][t];
        link_score[root] += link_score[other];
      }
      link_score[find(p.a)] += p.score;
      used[p.a] = used[p.b] = true;
    }
  }

  std::vector<int> root_to_pose(n, -1);
  std::vector<DecodedPose> poses;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (root_to_pose[r] < 0) {
      root_to_pose[r] = static_cast<int>(poses.size());
      DecodedPose p;
      p.keypoints.resize(keypoint_types);
      p.score = link_score[r];
      poses.push_back(std::move(p));
    }
    DecodedPose& p = poses[root_to_pose[r]];
    const auto& c = candidates[i];
    p.keypoints[c.type] = PoseKeypoint{c.x, c.y, c.score};
    p.score += c.score;
  }
  std::erase_if(poses, [&](const DecodedPose& p) { return p.count() < params.min_keypoints; });
  return poses;
}

std::vector<DecodedPose> decode_maps(const Tensor& heatmaps, const Tensor& pafs,
                                     std::span<const std::pair<int, int>> limbs, int stride,
                                     const DecodeParams& params) {
  const auto peaks = find_peaks(heatmaps, stride, params.peak_threshold);
  const int types = map_shape(heatmaps, "decode")[0] - 1;
  AssemblyParams ap;
  ap.connection_threshold = params.connection_threshold;
  ap.samples = params.samples;
  return assemble(peaks, pafs, limbs, types, stride, ap);
}

StageOutput multi_scale_infer(PoseNetwork& network, const Tensor& image,
                              std::span<const double> scales) {
  if (scales.empty()) throw std::invalid_argument("multi_scale_infer: empty scale list");
  const Tensor batch = image.rank() == 3 ? Tensor(Shape{1, image.dim(0), image.dim(1), image.dim(2)},
                                                  std::vector<float>(image.data().begin(), image.data().end()))
                                         : image;
  if (batch.rank() != 4 || batch.dim(0) != 1) {
    throw ShapeError("multi_scale_infer: expected one image, got " + shape_str(image.shape()));
  }
  const int stride = network.config().stride();
  const int H = batch.dim(2);
  const int W = batch.dim(3);
  if (H % stride != 0 || W % stride != 0) {
    throw ShapeError("multi_scale_infer: base image dims must be divisible by " + std::to_string(stride));
  }
  const int oh = H / stride;
  const int ow = W / stride;

  StageOutput sum;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double s = scales[i];
    if (!(s > 0.0)) throw std::invalid_argument("multi_scale_infer: scales must be positive");
    StageOutput out;
    if (s == 1.0) {
      out = network.infer(batch).back();
    } else {
      const int hs = std::max(1, static_cast<int>(std::lround(H * s)));
      const int ws = std::max(1, static_cast<int>(std::lround(W * s)));
      const Tensor scaled = resample_bilinear(batch, hs, ws, 1.0 / s, 1.0 / s);
      const int hp = (hs + stride - 1) / stride * stride;
      const int wp = (ws + stride - 1) / stride * stride;
      Tensor padded({1, 3, hp, wp});
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < hs; ++y) {
          std::copy_n(&scaled.at(0, c, y, 0), ws, &padded.at(0, c, y, 0));
        }
      }
      const StageOutput raw = network.infer(padded).back();
      out.heatmaps = resample_bilinear(raw.heatmaps, oh, ow, s, s);
      out.pafs = resample_bilinear(raw.pafs, oh, ow, s, s);
    }
    if (i == 0) {
      sum = std::move(out);
    } else {
      for (std::size_t k = 0; k < sum.heatmaps.size(); ++k) sum.heatmaps[k] += out.heatmaps[k];
      for (std::size_t k = 0; k < sum.pafs.size(); ++k) sum.pafs[k] += out.pafs[k];
    }
  }
  if (scales.size() > 1) {
    const float inv = static_cast<float>(scales.size());
    for (auto& v : sum.heatmaps.data()) v /= inv;
    for (auto& v : sum.pafs.data()) v /= inv;
  }
  return sum;
}

PckCounts pck_counts(std::span<const DecodedPose> poses, const SceneAnnotation& ann, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("pck: alpha must be positive");
  PckCounts counts;
  struct Match {
    double dist;
    std::size_t pose, person;
  };
  std::vector<Match> pairs;
  for (std::size_t q = 0; q < ann.persons.size(); ++q) {
    for (const auto& k : ann.persons[q]) counts.total += k.visible ? 1 : 0;
    for (std::size_t p = 0; p < poses.size(); ++p) {
      double acc = 0.0;
      int shared = 0;
      for (std::size_t j = 0; j < ann.persons[q].size() && j < poses[p].keypoints.size(); ++j) {
        const auto& gt = ann.persons[q][j];
        const auto& pk = poses[p].keypoints[j];
        if (!gt.visible || !pk) continue;
        acc += std::hypot(pk->x - gt.x, pk->y - gt.y);
        ++shared;
      }
      if (shared > 0) pairs.push_back({acc / shared, p, q});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Match& a, const Match& b) {
    return std::tie(a.dist, a.pose, a.person) < std::tie(b.dist, b.pose, b.person);
  });
  std::vector<bool> pose_used(poses.size(), false);
  std::vector<bool> person_used(ann.persons.size(), false);
  for (const Match& m : pairs) {
    if (pose_used[m.pose] || person_used[m.person]) continue;
    pose_used[m.pose] = person_used[m.person] = true;
    const auto& person = ann.persons[m.person];
    double x0 = std::numeric_limits<double>::max(), y0 = x0;
    double x1 = std::numeric_limits<double>::lowest(), y1 = x1;
    for (const auto& k : person) {
      if (!k.visible) continue;
      x0 = std::min(x0, k.x);
      y0 = std::min(y0, k.y);
      x1 = std::max(x1, k.x);
      y1 = std::max(y1, k.y);
    }
    const double limit = alpha * std::hypot(x1 - x0, y1 - y0);
    for (std::size_t j = 0; j < person.size() && j < poses[m.pose].keypoints.size(); ++j) {
      const auto& pk = poses[m.pose].keypoints[j];
      if (!person[j].visible || !pk) continue;
      if (std::hypot(pk->x - person[j].x, pk->y - person[j].y) <= limit) ++counts.correct;
    }
  }
  return counts;
}

double pck(std::span<const DecodedPose> poses, const SceneAnnotation& ann, double alpha) {
  return pck_counts(poses, ann, alpha).fraction();
}

PckCounts evaluate_pck(PoseNetwork& network, const ProjectConfig& config, const Split& split) {
  PckCounts total;
  const int stride = network.config().stride();
  for (std::uint64_t i = 0; split.eval_begin + i < split.eval_end; ++i) {
    const Scene scene = generate_scene(config.synth, split.eval_index(i));
    const StageOutput maps = multi_scale_infer(network, scene.image, config.decode.scales);
    const auto poses = decode_maps(maps.heatmaps, maps.pafs, scene.annotation.limbs, stride, config.decode);
    const PckCounts c = pck_counts(poses, scene.annotation, config.decode.pck_alpha);
    total.correct += c.correct;
    total.total += c.total;
  }
  return total;
}

}  // namespace dpnpose
