#include "dpnpose/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dpnpose/rng.hpp"

namespace dpnpose {

namespace {

constexpr std::array<std::array<float, 3>, 8> kPalette = {{
    {1.0f, 1.0f, 1.0f},
    {1.0f, 0.2f, 0.2f},
    {0.2f, 1.0f, 0.2f},
    {0.2f, 0.4f, 1.0f},
    {1.0f, 1.0f, 0.2f},
    {1.0f, 0.2f, 1.0f},
    {0.2f, 1.0f, 1.0f},
    {1.0f, 0.6f, 0.2f},
}};

constexpr double kLineHalfWidth = 1.0;
constexpr double kDotRadius = 3.0;
constexpr int kPlacementAttempts = 200;

struct Box {
  double x0, y0, x1, y1;
};

double box_gap(const Box& a, const Box& b) {
  const double dx = std::max({0.0, b.x0 - a.x1, a.x0 - b.x1});
  const double dy = std::max({0.0, b.y0 - a.y1, a.y0 - b.y1});
  return std::hypot(dx, dy);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double lx = bx - ax;
  const double ly = by - ay;
  const double len2 = lx * lx + ly * ly;
  double t = len2 > 0.0 ? ((px - ax) * lx + (py - ay) * ly) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * lx), py - (ay + t * ly));
}

void blend(Tensor& img, int h, int w, int x, int y, const std::array<float, 3>& color, float alpha) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t i = static_cast<std::size_t>(y) * w + x;
  for (int c = 0; c < 3; ++c) {
    float& v = img[c * plane + i];
    v = v * (1.0f - alpha) + color[c] * alpha;
  }
}

void draw_segment(Tensor& img, int h, int w, const Keypoint& a, const Keypoint& b,
                  const std::array<float, 3>& color) {
  const double reach = kLineHalfWidth + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = segment_distance(x, y, a.x, a.y, b.x, b.y);
      const double cover = std::clamp(kLineHalfWidth + 0.5 - d, 0.0, 1.0);
      if (cover > 0.0) blend(img, h, w, x, y, color, static_cast<float>(cover));
    }
  }
}

void draw_dot(Tensor& img, int h, int w, const Keypoint& k, const std::array<float, 3>& color) {
  const double reach = kDotRadius + 1.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(k.x - reach)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(k.x + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(k.y - reach)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(k.y + reach)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double cover = std::clamp(kDotRadius + 0.5 - std::hypot(x - k.x, y - k.y), 0.0, 1.0);
      if (cover > 0.0) blend(img, h, w, x, y, color, static_cast<float>(cover));
    }
  }
}

}  // namespace

Scene generate_scene(const SynthParams& params, std::uint64_t index) {
  params.validate();
  const Skeleton& sk = params.skeleton;
  const int H = params.height;
  const int W = params.width;
  SplitMix64 rng(params.seed, 2 * index);

  const int wanted = rng.uniform_int(1, params.max_persons);
  const double min_center = params.min_center_fraction * std::min(H, W);

  Scene scene;
  scene.annotation.height = H;
  scene.annotation.width = W;
  scene.annotation.limbs = sk.limbs;
  std::vector<std::array<double, 2>> centers;
  std::vector<Box> boxes;
  std::vector<float> intensities;

  for (int p = 0; p < wanted; ++p) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double scale = rng.uniform(params.scale_min, params.scale_max);
      const double angle = rng.uniform(-params.rotation, params.rotation);
      const double cs = std::cos(angle);
      const double sn = std::sin(angle);
      std::vector<std::array<double, 2>> rel(sk.keypoints);
      double minx = 0, maxx = 0, miny = 0, maxy = 0;
      for (int j = 0; j < sk.keypoints; ++j) {
        const double x = scale * sk.rest_pose[j][0];
        const double y = scale * sk.rest_pose[j][1];
        rel[j] = {cs * x - sn * y, sn * x + cs * y};
        if (j == 0) {
          minx = maxx = rel[j][0];
          miny = maxy = rel[j][1];
        } else {
          minx = std::min(minx, rel[j][0]);
          maxx = std::max(maxx, rel[j][0]);
          miny = std::min(miny, rel[j][1]);
          maxy = std::max(maxy, rel[j][1]);
        }
      }
      // One pixel of margin keeps every keypoint strictly inside [0,W)x[0,H).
      const double cx_lo = 1.0 - minx;
      const double cx_hi = W - 2.0 - maxx;
      const double cy_lo = 1.0 - miny;
      const double cy_hi = H - 2.0 - maxy;
      const double cx = rng.uniform(cx_lo, cx_hi);
      const double cy = rng.uniform(cy_lo, cy_hi);
      if (cx_hi < cx_lo || cy_hi < cy_lo) continue;
      const Box box{cx + minx, cy + miny, cx + maxx, cy + maxy};
      bool ok = true;
      for (std::size_t q = 0; q < centers.size() && ok; ++q) {
        if (std::hypot(cx - centers[q][0], cy - centers[q][1]) < min_center) ok = false;
        if (box_gap(box, boxes[q]) < params.min_gap) ok = false;
      }
      if (!ok) continue;
      std::vector<Keypoint> person(sk.keypoints);
      for (int j = 0; j < sk.keypoints; ++j) person[j] = {cx + rel[j][0], cy + rel[j][1], true};
      scene.annotation.persons.push_back(std::move(person));
      centers.push_back({cx, cy});
      boxes.push_back(box);
      intensities.push_back(static_cast<float>(rng.uniform(0.55, 1.0)));
      placed = true;
    }
    if (!placed) {
      if (p == 0) throw std::invalid_argument("generate_scene: a person does not fit in the image");
      break;
    }
  }

  Tensor img({3, H, W});
  SplitMix64 noise(params.seed, 2 * index + 1);
  for (auto& v : img.data()) v = static_cast<float>(params.noise * noise.uniform());
  const auto& persons = scene.annotation.persons;
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const float s = intensities[p];
    const std::array<float, 3> gray{0.6f * s, 0.6f * s, 0.6f * s};
    for (const auto& [a, b] : sk.limbs) draw_segment(img, H, W, persons[p][a], persons[p][b], gray);
  }
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const float s = intensities[p];
    for (int j = 0; j < sk.keypoints; ++j) {
      const auto& base = kPalette[j % kPalette.size()];
      draw_dot(img, H, W, persons[p][j], {base[0] * s, base[1] * s, base[2] * s});
    }
  }
  scene.image = std::move(img);
  return scene;
}

Split make_split(int n_train, int n_eval) {
  if (n_train <= 0 || n_eval <= 0) throw std::invalid_argument("make_split: sizes must be positive");
  Split s;
  s.train_begin = 0;
  s.train_end = static_cast<std::uint64_t>(n_train);
  s.eval_begin = s.train_end;
  s.eval_end = s.eval_begin + static_cast<std::uint64_t>(n_eval);
  return s;
}

Tensor stack_images(std::span<const Scene> scenes) {
  if (scenes.empty()) throw ShapeError("stack_images: no scenes");
  const Shape& s0 = scenes.front().image.shape();
  Tensor out({static_cast<int>(scenes.size()), s0[0], s0[1], s0[2]});
  const std::size_t chunk = scenes.front().image.size();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i].image.shape() != s0) {
      throw ShapeError("stack_images: scene " + std::to_string(i) + " has shape " +
                       shape_str(scenes[i].image.shape()) + ", expected " + shape_str(s0));
    }
    std::copy_n(scenes[i].image.ptr(), chunk, out.ptr() + i * chunk);
  }
  return out;
}

Tensor as_batch(const Tensor& chw) {
  Shape s{1};
  s.insert(s.end(), chw.shape().begin(), chw.shape().end());
  return Tensor(s, std::vector<float>(chw.data().begin(), chw.data().end()));
}

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("write_ppm: expected [3,H,W], got " + shape_str(chw.shape()));
  const int h = chw.dim(1);
  const int w = chw.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P6\n" << w << ' ' << h << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) f.put(static_cast<char>(to_byte(chw[c * plane + i])));
  }
}

void write_pgm(const std::filesystem::path& path, const Tensor& hw) {
  if (hw.rank() != 2) throw ShapeError("write_pgm: expected [H,W], got " + shape_str(hw.shape()));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "P5\n" << hw.dim(1) << ' ' << hw.dim(0) << "\n255\n";
  for (float v : hw.data()) f.put(static_cast<char>(to_byte(v)));
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t += c;
    }
    return t;
  };
  if (token() != "P6") throw std::runtime_error(path.string() + ": not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw std::runtime_error(path.string() + ": unsupported PPM dimensions or depth");
  }
  Tensor out({3, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      char b;
      if (!f.get(b)) throw std::runtime_error(path.string() + ": truncated pixel data");
      out[c * plane + i] = static_cast<unsigned char>(b) / static_cast<float>(maxval);
    }
  }
  return out;
}

}  // namespace dpnpose
