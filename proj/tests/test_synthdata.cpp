#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dpnpose/rng.hpp"
#include "dpnpose/synthdata.hpp"

using namespace dpnpose;

TEST_CASE("splitmix64 matches its published reference outputs") {
  // First outputs for seed 1234567 from the reference C implementation.
  SplitMix64 rng(1234567);
  CHECK(rng.next() == 6457827717110365317ull);
  CHECK(rng.next() == 3203168211198807973ull);
  CHECK(rng.next() == 9817491932198370423ull);
  CHECK(rng.next() == 4593380528125082431ull);
  CHECK(rng.next() == 16408922859458223821ull);
}

TEST_CASE("uniform draws stay in range") {
  SplitMix64 rng(5, 9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const int k = rng.uniform_int(2, 5);
    CHECK(k >= 2);
    CHECK(k <= 5);
  }
}

TEST_CASE("scenes are a deterministic function of seed and index") {
  SynthParams sp;
  sp.seed = 42;
  const Scene a = generate_scene(sp, 17);
  const Scene b = generate_scene(sp, 17);
  CHECK(bitwise_equal(a.image, b.image));
  CHECK(a.annotation == b.annotation);
  CHECK_FALSE(bitwise_equal(generate_scene(sp, 18).image, a.image));
  sp.seed = 43;
  CHECK_FALSE(bitwise_equal(generate_scene(sp, 17).image, a.image));
}

TEST_CASE("one person when max_persons is 1") {
  SynthParams sp;
  sp.max_persons = 1;
  for (std::uint64_t i = 0; i < 50; ++i) CHECK(generate_scene(sp, i).annotation.persons.size() == 1);
}

TEST_CASE("1000 scenes: keypoints in bounds, persons spread, pixel values in range") {
  SynthParams sp;
  sp.seed = 5;
  const double min_center = sp.min_center_fraction * std::min(sp.height, sp.width);
  std::size_t persons_seen = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const Scene s = generate_scene(sp, i);
    const auto& ps = s.annotation.persons;
    CHECK(ps.size() >= 1);
    CHECK(ps.size() <= static_cast<std::size_t>(sp.max_persons));
    persons_seen += ps.size();
    std::vector<std::pair<double, double>> centers;
    for (const auto& p : ps) {
      REQUIRE(p.size() == 5);
      for (const auto& k : p) {
        CHECK(k.visible);
        CHECK(k.x >= 0.0);
        CHECK(k.x < sp.width);
        CHECK(k.y >= 0.0);
        CHECK(k.y < sp.height);
      }
      // Rest pose: head at (0,-1), feet at (+-0.4, 1); their midpoint is the origin.
      centers.emplace_back((p[0].x + 0.5 * (p[3].x + p[4].x)) / 2, (p[0].y + 0.5 * (p[3].y + p[4].y)) / 2);
    }
    for (std::size_t a = 0; a < centers.size(); ++a)
      for (std::size_t b = a + 1; b < centers.size(); ++b)
        CHECK(std::hypot(centers[a].first - centers[b].first, centers[a].second - centers[b].second) >=
              min_center - 1e-9);
    if (i % 100 == 0) {
      for (float v : s.image.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
  CHECK(persons_seen > 1500);  // multi-person scenes are common
}

TEST_CASE("min_gap separates person bounding boxes") {
  SynthParams sp;
  sp.height = sp.width = 256;
  sp.min_gap = 64;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto& ps = generate_scene(sp, i).annotation.persons;
    for (std::size_t a = 0; a < ps.size(); ++a)
      for (std::size_t b = a + 1; b < ps.size(); ++b) {
        double ax0 = 1e9, ax1 = -1e9, ay0 = 1e9, ay1 = -1e9, bx0 = 1e9, bx1 = -1e9, by0 = 1e9, by1 = -1e9;
        for (const auto& k : ps[a]) ax0 = std::min(ax0, k.x), ax1 = std::max(ax1, k.x), ay0 = std::min(ay0, k.y), ay1 = std::max(ay1, k.y);
        for (const auto& k : ps[b]) bx0 = std::min(bx0, k.x), bx1 = std::max(bx1, k.x), by0 = std::min(by0, k.y), by1 = std::max(by1, k.y);
        const double dx = std::max({0.0, bx0 - ax1, ax0 - bx1});
        const double dy = std::max({0.0, by0 - ay1, ay0 - by1});
        CHECK(std::hypot(dx, dy) >= 64.0 - 1e-6);
      }
  }
}

TEST_CASE("train and eval splits are disjoint") {
  const Split s = make_split(100, 20);
  CHECK(s.train_begin == 0);
  CHECK(s.train_end == 100);
  CHECK(s.eval_begin == 100);
  CHECK(s.eval_end == 120);
  CHECK(s.train_index(250) == 50);
  CHECK(s.eval_index(19) == 119);
  CHECK_THROWS(make_split(0, 5));
  SynthParams sp;
  CHECK(generate_scene(sp, s.eval_index(3)).annotation == generate_scene(sp, 103).annotation);
}

TEST_CASE("ppm round trip") {
  SynthParams sp;
  sp.height = 24;
  sp.width = 40;
  sp.scale_min = 4;
  sp.scale_max = 5;
  const Scene s = generate_scene(sp, 1);
  const auto path = std::filesystem::temp_directory_path() / "dpnpose_test_scene.ppm";
  write_ppm(path, s.image);
  const Tensor back = read_ppm(path);
  REQUIRE(back.shape() == s.image.shape());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back[i] - s.image[i]) <= 0.5f / 255 + 1e-6f);
  std::filesystem::remove(path);
}
