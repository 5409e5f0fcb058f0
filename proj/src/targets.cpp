#include "dpnpose/targets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dpnpose {

int SceneAnnotation::keypoint_types() const {
  return persons.empty() ? 0 : static_cast<int>(persons.front().size());
}

void SceneAnnotation::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("annotation: image dims must be positive");
  const int k = keypoint_types();
  for (std::size_t p = 0; p < persons.size(); ++p) {
    if (static_cast<int>(persons[p].size()) != k) {
      throw std::invalid_argument("annotation: person " + std::to_string(p) + " has " +
                                  std::to_string(persons[p].size()) + " keypoints, expected " +
                                  std::to_string(k));
    }
    for (std::size_t j = 0; j < persons[p].size(); ++j) {
      const Keypoint& kp = persons[p][j];
      if (kp.visible && !(kp.x >= 0.0 && kp.x < width && kp.y >= 0.0 && kp.y < height)) {
        throw std::invalid_argument("annotation: person " + std::to_string(p) + " keypoint " +
                                    std::to_string(j) + " lies outside the image");
      }
    }
  }
  for (const auto& [a, b] : limbs) {
    if (!persons.empty() && (a < 0 || a >= k || b < 0 || b >= k)) {
      throw std::invalid_argument("annotation: limb " + std::to_string(a) + "-" +
                                  std::to_string(b) + " references a missing keypoint");
    }
  }
}

namespace {

void check_stride(const SceneAnnotation& ann, int stride) {
  if (stride <= 0) throw std::invalid_argument("render: stride must be positive");
  if (ann.height % stride != 0 || ann.width % stride != 0) {
    throw std::invalid_argument("render: image dims not divisible by stride " + std::to_string(stride));
  }
}

}  // namespace

Tensor render_heatmaps(const SceneAnnotation& ann, int stride, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_heatmaps: sigma must be positive");
  check_stride(ann, stride);
  const int types = ann.keypoint_types();
  const int oh = ann.height / stride;
  const int ow = ann.width / stride;
  const int channels = types + 1;
  Tensor out({channels, oh, ow});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& person : ann.persons) {
    for (int j = 0; j < types; ++j) {
      const Keypoint& kp = person[j];
      if (!kp.visible) continue;
      for (int y = 0; y < oh; ++y) {
        const double dy = y * stride - kp.y;
        for (int x = 0; x < ow; ++x) {
          const double dx = x * stride - kp.x;
          const float v = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
          float& cell = out[(static_cast<std::size_t>(j) * oh + y) * ow + x];
          cell = std::max(cell, v);
        }
      }
    }
  }
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (std::size_t i = 0; i < plane; ++i) {
    float m = 0.0f;
    for (int j = 0; j < types; ++j) m = std::max(m, out[j * plane + i]);
    out[types * plane + i] = std::clamp(1.0f - m, 0.0f, 1.0f);
  }
  return out;
}

Tensor render_pafs(const SceneAnnotation& ann, int stride, double half_width) {
  if (!(half_width > 0.0)) throw std::invalid_argument("render_pafs: half-width must be positive");
  check_stride(ann, stride);
  const int oh = ann.height / stride;
  const int ow = ann.width / stride;
  const int limbs = static_cast<int>(ann.limbs.size());
  Tensor out({2 * limbs, oh, ow});
  std::vector<double> sx(static_cast<std::size_t>(oh) * ow);
  std::vector<double> sy(sx.size());
  std::vector<int> count(sx.size());
  for (int c = 0; c < limbs; ++c) {
    std::fill(sx.begin(), sx.end(), 0.0);
    std::fill(sy.begin(), sy.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    const auto [ia, ib] = ann.limbs[c];
    for (const auto& person : ann.persons) {
      const Keypoint& a = person[ia];
      const Keypoint& b = person[ib];
      if (!a.visible || !b.visible) continue;
      const double lx = b.x - a.x;
      const double ly = b.y - a.y;
      const double len = std::hypot(lx, ly);
      if (len == 0.0) continue;
      const double vx = lx / len;
      const double vy = ly / len;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double px = x * stride - a.x;
          const double py = y * stride - a.y;
          const double along = px * vx + py * vy;
          const double across = std::abs(px * vy - py * vx);
          if (along < 0.0 || along > len || across > half_width) continue;
          const std::size_t i = static_cast<std::size_t>(y) * ow + x;
          sx[i] += vx;
          sy[i] += vy;
          ++count[i];
        }
      }
    }
    const std::size_t plane = sx.size();
    for (std::size_t i = 0; i < plane; ++i) {
      if (count[i] == 0) continue;
      out[(2 * c) * plane + i] = static_cast<float>(sx[i] / count[i]);
      out[(2 * c + 1) * plane + i] = static_cast<float>(sy[i] / count[i]);
    }
  }
  return out;
}

TargetMaps render_targets(const SceneAnnotation& ann, int stride, const TargetParams& params) {
  return {render_heatmaps(ann, stride, params.sigma),
          render_pafs(ann, stride, params.paf_half_width * stride)};
}

std::string annotation_to_text(const SceneAnnotation& ann) {
  std::string out;
  char buf[64];
  for (const auto& person : ann.persons) {
    for (std::size_t j = 0; j < person.size(); ++j) {
      if (j) out += ' ';
      auto r = std::to_chars(buf, buf + sizeof(buf), person[j].x);
      out.append(buf, r.ptr);
      out += ',';
      r = std::to_chars(buf, buf + sizeof(buf), person[j].y);
      out.append(buf, r.ptr);
      out += person[j].visible ? ",1" : ",0";
    }
    out += '\n';
  }
  return out;
}

SceneAnnotation annotation_from_text(std::string_view text, int height, int width,
                                     std::vector<std::pair<int, int>> limbs) {
  SceneAnnotation ann;
  ann.height = height;
  ann.width = width;
  ann.limbs = std::move(limbs);
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string triple;
    std::vector<Keypoint> person;
    while (fields >> triple) {
      Keypoint kp;
      int v = -1;
      const char* p = triple.data();
      const char* end = p + triple.size();
      auto r1 = std::from_chars(p, end, kp.x);
      bool ok = r1.ec == std::errc() && r1.ptr < end && *r1.ptr == ',';
      if (ok) {
        auto r2 = std::from_chars(r1.ptr + 1, end, kp.y);
        ok = r2.ec == std::errc() && r2.ptr < end && *r2.ptr == ',';
        if (ok) {
          auto r3 = std::from_chars(r2.ptr + 1, end, v);
          ok = r3.ec == std::errc() && r3.ptr == end && (v == 0 || v == 1);
        }
      }
      if (!ok) {
        throw std::invalid_argument("annotation line " + std::to_string(lineno) +
                                    ": malformed keypoint '" + triple + "' (expected x,y,v)");
      }
      kp.visible = v == 1;
      person.push_back(kp);
    }
    if (!person.empty()) ann.persons.push_back(std::move(person));
  }
  ann.validate();
  return ann;
}

}  // namespace dpnpose
