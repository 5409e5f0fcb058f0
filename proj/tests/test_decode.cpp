#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dpnpose/decode.hpp"
#include "dpnpose/rng.hpp"
#include "oracles.hpp"

using namespace dpnpose;

namespace {

SceneAnnotation stick_scene(int h, int w, std::vector<std::pair<double, double>> origins) {
  SceneAnnotation a;
  a.height = h;
  a.width = w;
  a.limbs = Skeleton::stick_figure().limbs;
  for (auto [ox, oy] : origins) {
    std::vector<Keypoint> p;
    for (auto [rx, ry] : Skeleton::stick_figure().rest_pose) p.push_back({ox + 24 * rx, oy + 24 * ry, true});
    a.persons.push_back(p);
  }
  return a;
}

// Exhaustive 3x3 scan with the scan-order tie rule.
std::vector<std::array<int, 3>> peak_oracle(const Tensor& s, double threshold) {
  const int J = s.dim(0), h = s.dim(1), w = s.dim(2);
  auto at = [&](int c, int y, int x) { return s[(static_cast<std::size_t>(c) * h + y) * w + x]; };
  std::vector<std::array<int, 3>> out;
  for (int c = 0; c + 1 < J; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float v = at(c, y, x);
        if (v < threshold) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if ((dy == 0 && dx == 0) || yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
            const bool before = dy < 0 || (dy == 0 && dx < 0);
            if (before ? at(c, yy, xx) >= v : at(c, yy, xx) > v) peak = false;
          }
        if (peak) out.push_back({c, y, x});
      }
  return out;
}

NetworkConfig small_net() {
  NetworkConfig cfg = NetworkConfig::tiny();
  cfg.frontend = parse_frontend("8,M,8,M,8,M,8");
  return cfg;
}

}  // namespace

TEST_CASE("single Gaussian gives one peak at its centre") {
  SceneAnnotation a;
  a.height = a.width = 64;
  a.persons = {{{24, 40, true}}};
  const auto peaks = find_peaks(render_heatmaps(a, 8, 7.0), 8, 0.3);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].type == 0);
  CHECK(peaks[0].x == 24.0);
  CHECK(peaks[0].y == 40.0);
  CHECK(peaks[0].score == 1.0f);
  CHECK(find_peaks(Tensor({3, 8, 8}), 8, 0.3).empty());
  CHECK(find_peaks(Tensor({1, 3, 8, 8}), 8, 0.3).empty());
}

TEST_CASE("peaks match an exhaustive scan") {
  SplitMix64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    SceneAnnotation a;
    a.height = a.width = 96;
    for (int k = 0; k < 2; ++k)
      a.persons.push_back({{rng.uniform(0, 95), rng.uniform(0, 95), true}, {rng.uniform(0, 95), rng.uniform(0, 95), true}});
    Tensor s = render_heatmaps(a, 8, 7.0);
    if (trial % 2 == 1) s = oracle::random_tensor(rng, {3, 12, 12}, 0, 1);
    const auto peaks = find_peaks(s, 8, 0.3);
    const auto expect = peak_oracle(s, 0.3);
    REQUIRE(peaks.size() == expect.size());
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      CHECK(peaks[i].type == expect[i][0]);
      CHECK(peaks[i].y == expect[i][1] * 8.0);
      CHECK(peaks[i].x == expect[i][2] * 8.0);
    }
  }
  // Two well-separated grid-aligned Gaussians: exactly their centres.
  SceneAnnotation a;
  a.height = a.width = 128;
  a.persons = {{{16, 16, true}}, {{96, 104, true}}};
  const auto two = find_peaks(render_heatmaps(a, 8, 7.0), 8, 0.3);
  REQUIRE(two.size() == 2);
  CHECK((two[0].x == 16.0 && two[0].y == 16.0));
  CHECK((two[1].x == 96.0 && two[1].y == 104.0));
}

TEST_CASE("connection score follows the field") {
  const auto ann = stick_scene(128, 128, {{64, 56}});
  const Tensor pafs = render_pafs(ann, 8, 8.0);
  const auto& p = ann.persons[0];
  for (int c = 0; c < 4; ++c) {
    const auto [ia, ib] = ann.limbs[c];
    const KeypointCandidate a{ia, p[ia].x, p[ia].y, 1.0f};
    const KeypointCandidate b{ib, p[ib].x, p[ib].y, 1.0f};
    CHECK(score_connection(pafs, c, a, b, 10, 8) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(score_connection(pafs, c, b, a, 10, 8) == doctest::Approx(-1.0).epsilon(0.05));
  }
  // Limb 0 runs head -> left hand; a segment across it scores near zero.
  const double mx = (p[0].x + p[1].x) / 2, my = (p[0].y + p[1].y) / 2;
  const double dx = p[1].x - p[0].x, dy = p[1].y - p[0].y, len = std::hypot(dx, dy);
  const KeypointCandidate u{0, mx + 6 * dy / len, my - 6 * dx / len, 1.0f};
  const KeypointCandidate v{1, mx - 6 * dy / len, my + 6 * dx / len, 1.0f};
  CHECK(std::abs(score_connection(pafs, 0, u, v, 10, 8)) < 0.05);
  const KeypointCandidate a{0, p[0].x, p[0].y, 1.0f};
  CHECK(score_connection(Tensor({8, 16, 16}), 0, a, {1, p[1].x, p[1].y, 1.0f}, 10, 8) == 0.0);
  CHECK(score_connection(pafs, 0, a, a, 10, 8) == 0.0);
  CHECK_THROWS(score_connection(pafs, 0, a, a, 1, 8));
  CHECK_THROWS_AS(score_connection(pafs, 4, a, a, 10, 8), std::out_of_range);
}

TEST_CASE("assembly recovers ground-truth persons") {
  const DecodeParams params;
  SUBCASE("one person") {
    const auto ann = stick_scene(128, 128, {{64, 56}});
    const auto t = render_targets(ann, 8, TargetParams{7.0, 1.0});
    const auto poses = decode_maps(t.heatmaps, t.pafs, ann.limbs, 8, params);
    REQUIRE(poses.size() == 1);
    CHECK(poses[0].count() == 5);
    CHECK(pck(poses, ann, 0.2) == 1.0);
  }
  SUBCASE("two persons") {
    const auto ann = stick_scene(256, 256, {{64, 64}, {184, 176}});
    const auto t = render_targets(ann, 8, TargetParams{7.0, 1.0});
    const auto poses = decode_maps(t.heatmaps, t.pafs, ann.limbs, 8, params);
    REQUIRE(poses.size() == 2);
    for (const auto& pose : poses) {
      REQUIRE(pose.count() == 5);
      const int person = pose.keypoints[0]->x < 128 ? 0 : 1;
      for (int k = 0; k < 5; ++k)
        CHECK(std::hypot(pose.keypoints[k]->x - ann.persons[person][k].x,
                         pose.keypoints[k]->y - ann.persons[person][k].y) <= 8.0);
    }
    const auto again = decode_maps(t.heatmaps, t.pafs, ann.limbs, 8, params);
    REQUIRE(again.size() == poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) CHECK(again[i].score == poses[i].score);
  }
  SUBCASE("no candidates") {
    const std::vector<KeypointCandidate> none;
    const auto limbs = Skeleton::stick_figure().limbs;
    CHECK(assemble(none, Tensor({8, 16, 16}), limbs, 5, 8, AssemblyParams{}).empty());
  }
}

TEST_CASE("multi-scale inference") {
  const NetworkConfig cfg = small_net();
  PoseNetwork net(cfg, 4);
  SplitMix64 rng(8);
  const Tensor image = oracle::random_tensor(rng, {3, 64, 64}, 0, 1);
  const auto plain = net.infer(as_batch(image)).back();

  const std::vector<double> one{1.0}, twice{1.0, 1.0};
  const StageOutput a = multi_scale_infer(net, image, one);
  CHECK(bitwise_equal(a.heatmaps, plain.heatmaps));
  CHECK(bitwise_equal(a.pafs, plain.pafs));
  const StageOutput b = multi_scale_infer(net, image, twice);
  CHECK(bitwise_equal(b.heatmaps, plain.heatmaps));

  // Constant heads survive resampling and averaging at any scale.
  const auto& last = net.dpn_stages().back();
  for (auto* layer : {&last.head_heatmaps, &last.head_pafs}) {
    for (auto& v : layer->weight->value.data()) v = 0.0f;
    for (auto& v : layer->bias->value.data()) v = 0.25f;
  }
  const std::vector<double> scales{0.5, 1.0, 1.5, 2.0};
  const StageOutput c = multi_scale_infer(net, image, scales);
  CHECK(c.heatmaps.shape() == Shape{1, cfg.keypoints, 8, 8});
  CHECK(c.pafs.shape() == Shape{1, cfg.pafs, 8, 8});
  for (float v : c.heatmaps.data()) CHECK(v == doctest::Approx(0.25f));
  for (float v : c.pafs.data()) CHECK(v == doctest::Approx(0.25f));

  const std::vector<double> empty, negative{1.0, -0.5};
  CHECK_THROWS(multi_scale_infer(net, image, empty));
  CHECK_THROWS(multi_scale_infer(net, image, negative));
}

TEST_CASE("pck") {
  const auto ann = stick_scene(128, 128, {{64, 56}});
  const auto& gt = ann.persons[0];
  double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
  for (const auto& k : gt) x0 = std::min(x0, k.x), x1 = std::max(x1, k.x), y0 = std::min(y0, k.y), y1 = std::max(y1, k.y);
  const double tol = 0.2 * std::hypot(x1 - x0, y1 - y0);
  auto shifted = [&](double d) {
    DecodedPose p;
    for (const auto& k : gt) p.keypoints.push_back(PoseKeypoint{k.x + d, k.y, 1.0f});
    return std::vector<DecodedPose>{p};
  };
  CHECK(pck(shifted(0.0), ann, 0.2) == 1.0);
  CHECK(pck(shifted(tol - 1e-6), ann, 0.2) == 1.0);
  CHECK(pck(shifted(tol + 1e-6), ann, 0.2) == 0.0);
  CHECK(pck({}, ann, 0.2) == 0.0);
  const auto counts = pck_counts(shifted(0.0), ann, 0.2);
  CHECK(counts.correct == 5);
  CHECK(counts.total == 5);
  SceneAnnotation empty = ann;
  empty.persons.clear();
  CHECK(pck({}, empty, 0.2) == 1.0);
}
