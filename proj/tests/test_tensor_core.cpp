#include <doctest.h>

#include <array>
#include <cmath>

#include "dpnpose/gradcheck.hpp"
#include "dpnpose/graph.hpp"
#include "dpnpose/kernels.hpp"
#include "dpnpose/optim.hpp"
#include "dpnpose/reference.hpp"
#include "oracles.hpp"

using namespace dpnpose;
using oracle::random_tensor;

namespace {

Tensor run_conv(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad, int groups) {
  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto y = g.conv2d(g.constant(x), g.constant(w), b.empty() ? Graph<float>::Var{} : g.constant(b),
                          stride, pad, groups);
  return g.value(y);
}

}  // namespace

TEST_CASE("tensor shape and element access") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.rank() == 4);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK(Tensor({}, std::vector<float>{3.0f}).item() == 3.0f);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("conv2d matches the sliding-window oracle") {
  SplitMix64 rng(11);
  struct Case {
    Shape x, w;
    int stride, pad, groups;
  };
  const std::array<Case, 5> cases{{
      {{1, 4, 5, 5}, {3, 4, 3, 3}, 1, 1, 1},
      {{2, 6, 7, 6}, {4, 3, 3, 3}, 1, 1, 2},
      {{2, 8, 6, 6}, {8, 1, 3, 3}, 1, 1, 8},
      {{1, 5, 9, 8}, {7, 5, 1, 1}, 1, 0, 1},
      {{2, 3, 8, 7}, {4, 3, 3, 3}, 2, 1, 1},
  }};
  for (const auto& c : cases) {
    const Tensor x = random_tensor(rng, c.x);
    const Tensor w = random_tensor(rng, c.w);
    const Tensor b = random_tensor(rng, {c.w[0]});
    const Tensor y = run_conv(x, w, b, c.stride, c.pad, c.groups);
    const auto expect = oracle::conv2d(x, w, b, c.stride, c.pad, c.groups);
    REQUIRE(y.size() == expect.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      worst = std::max(worst, std::abs(y[i] - expect[i]) / std::max(1.0, std::abs(expect[i])));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("conv2d identity and zero-input cases") {
  SplitMix64 rng(3);
  const Tensor x = random_tensor(rng, {2, 4, 5, 5});
  Tensor eye({4, 4, 1, 1});
  for (int c = 0; c < 4; ++c) eye.at(c, c, 0, 0) = 1.0f;
  CHECK(run_conv(x, eye, Tensor({4}), 1, 0, 1) == x);

  const Tensor zero({1, 3, 4, 4});
  const Tensor w = random_tensor(rng, {2, 3, 3, 3});
  const Tensor b({2}, std::vector<float>{0.5f, -2.0f});
  const Tensor y = run_conv(zero, w, b, 1, 1, 1);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(y.at(0, c, i, j) == b[c]);
}

TEST_CASE("same padding preserves resolution and even kernels are rejected") {
  CHECK(same_padding(1) == 0);
  CHECK(same_padding(3) == 1);
  CHECK(same_padding(7) == 3);
  CHECK_THROWS_AS(same_padding(4), std::invalid_argument);
  SplitMix64 rng(4);
  const Tensor x = random_tensor(rng, {1, 2, 9, 7});
  for (int k : {1, 3, 5, 7}) {
    const Tensor y = run_conv(x, random_tensor(rng, {3, 2, k, k}), Tensor({3}), 1, same_padding(k), 1);
    CHECK(y.dim(2) == 9);
    CHECK(y.dim(3) == 7);
  }
}

TEST_CASE("conv2d shape errors name the offending dimension") {
  Graph<float> g;
  const auto x = g.constant(Tensor({1, 6, 4, 4}));
  auto message = [&](Shape w, int groups) {
    try {
      g.conv2d(x, g.constant(Tensor(std::move(w))), Graph<float>::Var{}, 1, 1, groups);
    } catch (const ShapeError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({4, 5, 3, 3}, 1).find("weight input-channel") != std::string::npos);
  CHECK(message({5, 3, 3, 3}, 2).find("output channels") != std::string::npos);
  CHECK(message({4, 6, 3, 3}, 4).find("input channels") != std::string::npos);
}

TEST_CASE("grouped conv equals per-group convs concatenated") {
  SplitMix64 rng(5);
  const int G = 3;
  const Tensor x = random_tensor(rng, {2, 6, 5, 5});
  const Tensor w = random_tensor(rng, {9, 2, 3, 3});
  const Tensor b = random_tensor(rng, {9});
  const Tensor grouped = run_conv(x, w, b, 1, 1, G);

  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto xv = g.constant(x);
  std::vector<Graph<float>::Var> parts;
  for (int k = 0; k < G; ++k) {
    Tensor wk({3, 2, 3, 3});
    std::copy_n(w.ptr() + k * wk.size(), wk.size(), wk.ptr());
    Tensor bk({3}, std::vector<float>(b.ptr() + 3 * k, b.ptr() + 3 * k + 3));
    parts.push_back(g.conv2d(g.slice_channels(xv, 2 * k, 2), g.constant(wk), g.constant(bk), 1, 1, 1));
  }
  const Tensor split = g.value(g.concat(parts));
  REQUIRE(split.shape() == grouped.shape());
  for (std::size_t i = 0; i < split.size(); ++i) CHECK(split[i] == doctest::Approx(grouped[i]).epsilon(1e-5));
}

TEST_CASE("parallel conv kernels agree with the serial reference") {
  SplitMix64 rng(6);
  ConvGeometry geo{2, 8, 6, 7, 6, 3, 3, 1, 1, 2};
  const Tensor x = random_tensor(rng, {2, 8, 6, 7});
  const Tensor w = random_tensor(rng, {6, 4, 3, 3});
  const Tensor b = random_tensor(rng, {6});
  Tensor y1({2, 6, 6, 7}), y2({2, 6, 6, 7});
  kernels::conv2d_forward<float>(geo, x.data(), w.data(), b.data(), y1.data());
  reference::conv2d_forward<float>(geo, x.data(), w.data(), b.data(), y2.data());
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-5));

  const Tensor gy = random_tensor(rng, {2, 6, 6, 7});
  Tensor gx1(x.shape()), gx2(x.shape()), gw1(w.shape()), gw2(w.shape()), gb1(b.shape()), gb2(b.shape());
  kernels::conv2d_backward<float>(geo, x.data(), w.data(), gy.data(), gx1.data(), gw1.data(), gb1.data());
  reference::conv2d_backward<float>(geo, x.data(), w.data(), gy.data(), gx2.data(), gw2.data(), gb2.data());
  for (std::size_t i = 0; i < gx1.size(); ++i) CHECK(gx1[i] == doctest::Approx(gx2[i]).epsilon(1e-4));
  for (std::size_t i = 0; i < gw1.size(); ++i) CHECK(gw1[i] == doctest::Approx(gw2[i]).epsilon(1e-4));
  for (std::size_t i = 0; i < gb1.size(); ++i) CHECK(gb1[i] == doctest::Approx(gb2[i]).epsilon(1e-4));
}

TEST_CASE("kernels are bitwise reproducible") {
  SplitMix64 rng(7);
  ConvGeometry geo{1, 16, 12, 12, 32, 3, 3, 1, 1, 1};
  const Tensor x = random_tensor(rng, {1, 16, 12, 12});
  const Tensor w = random_tensor(rng, {32, 16, 3, 3});
  const Tensor b = random_tensor(rng, {32});
  Tensor y1({1, 32, 12, 12}), y2({1, 32, 12, 12});
  kernels::conv2d_forward<float>(geo, x.data(), w.data(), b.data(), y1.data());
  kernels::conv2d_forward<float>(geo, x.data(), w.data(), b.data(), y2.data());
  CHECK(bitwise_equal(y1, y2));
}

TEST_CASE("pointwise and shape ops") {
  SplitMix64 rng(8);
  Graph<float> g(GraphOptions{.enable_grad = false});
  const Tensor a = random_tensor(rng, {2, 3, 4, 4});
  const Tensor b = random_tensor(rng, {2, 5, 4, 4});
  const std::array<Graph<float>::Var, 2> parts{g.constant(a), g.constant(b)};
  const Tensor cat = g.value(g.concat(parts));
  CHECK(cat.dim(1) == 8);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(cat.at(n, c, y, x) == a.at(n, c, y, x));

  const Tensor neg = random_tensor(rng, {2, 3, 3, 3}, -2.0, -0.1);
  for (float v : g.value(g.relu(g.constant(neg))).data()) CHECK(v == 0.0f);

  const Tensor sum = g.value(g.add(g.constant(a), g.constant(a)));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(sum[i] == 2.0f * a[i]);

  const Tensor pooled = g.value(g.max_pool2x2(g.constant(a)));
  CHECK(pooled.shape() == Shape{2, 3, 2, 2});
  Tensor ref_pool(pooled.shape());
  reference::max_pool2x2_forward<float>(6, 4, 4, a.data(), ref_pool.data());
  CHECK(pooled == ref_pool);

  CHECK_THROWS_AS(g.add(g.constant(a), g.constant(b)), ShapeError);
  CHECK_THROWS_AS(g.concat(std::array{g.constant(a), g.constant(Tensor({2, 3, 5, 4}))}), ShapeError);
  CHECK_THROWS_AS(g.max_pool2x2(g.constant(Tensor({1, 1, 3, 4}))), ShapeError);
}

TEST_CASE("bilinear resize preserves constants") {
  Tensor c({1, 2, 5, 7}, 0.375f);
  for (auto [h, w] : {std::pair{3, 4}, {10, 14}, {1, 1}, {17, 9}}) {
    const Tensor r = bilinear_resize(c, h, w);
    for (float v : r.data()) CHECK(v == 0.375f);
  }
  CHECK_THROWS(bilinear_resize(c, 0, 3));
}

TEST_CASE("sse loss") {
  Graph<float> g;
  Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  Tensor p = t;
  for (auto& v : p.data()) v += 1.0f;
  CHECK(g.value(g.sse(g.constant(t), g.constant(t))).item() == 0.0f);
  CHECK(g.value(g.sse(g.constant(p), g.constant(t))).item() == 6.0f);
  CHECK_THROWS_AS(g.sse(g.constant(t), g.constant(Tensor({3, 2}))), ShapeError);

  SplitMix64 rng(9);
  const Tensor a = random_tensor(rng, {2, 4, 7, 5});
  const Tensor b = random_tensor(rng, {2, 4, 7, 5});
  const double got = g.value(g.sse(g.constant(a), g.constant(b))).item();
  CHECK(oracle::rel_err(got, oracle::sse(a, b)) < 1e-6);
}

TEST_CASE("backward accumulates fan-out and rejects misuse") {
  Parameter x{"x", Tensor({2, 3}, 0.5f)};
  {
    Graph<float> g;
    const auto v = g.parameter(x);
    g.backward(g.sum(v));
    const Tensor gx = g.grad(v);
    for (float gv : gx.data()) CHECK(gv == 1.0f);
  }
  x.grad.reset();
  {
    Graph<float> g;
    const auto v = g.parameter(x);
    const auto loss = g.sum(g.add(v, v));
    g.backward(loss);
    const Tensor gx = g.grad(v);
    for (float gv : gx.data()) CHECK(gv == 2.0f);
    CHECK_THROWS_AS(g.backward(loss), std::logic_error);
    REQUIRE(x.grad.has_value());
    for (float gv : x.grad->data()) CHECK(gv == 2.0f);
  }
  {
    Graph<float> g;
    CHECK_THROWS(g.backward(Graph<float>::Var{}));
    CHECK_THROWS(g.backward(g.constant(Tensor({2}))));
  }
}

TEST_CASE("fan-out through k uses scales the gradient by k") {
  SplitMix64 rng(10);
  Parameter w{"w", random_tensor(rng, {3, 2, 3, 3})};
  const Tensor x = random_tensor(rng, {1, 2, 4, 4});
  const Tensor t = random_tensor(rng, {1, 3, 4, 4});
  auto grad_with_uses = [&](int k) {
    w.grad.reset();
    Graph<float> g;
    const auto wv = g.parameter(w);
    Graph<float>::Var loss;
    for (int i = 0; i < k; ++i) {
      const auto l = g.sse(g.conv2d(g.constant(x), wv, {}, 1, 1, 1), g.constant(t));
      loss = loss.valid() ? g.add(loss, l) : l;
    }
    g.backward(loss);
    return *w.grad;
  };
  const Tensor g1 = grad_with_uses(1);
  const Tensor g3 = grad_with_uses(3);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g3[i] == doctest::Approx(3.0 * g1[i]).epsilon(1e-5));
}

TEST_CASE("finite difference checker") {
  SplitMix64 rng(12);
  SUBCASE("linear graph is exact") {
    Parameter p{"p", random_tensor(rng, {2, 3, 2, 2})};
    const TensorD c = random_tensor(rng, {2, 3, 2, 2}).cast<double>();
    // sum(p + c) is linear in p.
    const auto r = finite_diff_check([&](Graph<double>& g) { return g.sum(g.add(g.parameter(p), g.constant(c))); }, p);
    CHECK(r.max_relative_error < 1e-6);
    CHECK(r.coordinates == p.value.size());
  }
  SUBCASE("conv + relu + sse micro-graph") {
    Parameter w{"w", random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5)};
    Parameter b{"b", random_tensor(rng, {3}, -0.2, 0.2)};
    const TensorD x = random_tensor(rng, {2, 2, 5, 5}).cast<double>();
    const TensorD t = random_tensor(rng, {2, 3, 5, 5}).cast<double>();
    const LossBuilder build = [&](Graph<double>& g) {
      return g.sse(g.relu(g.conv2d(g.constant(x), g.parameter(w), g.parameter(b), 1, 1, 1)), g.constant(t));
    };
    CHECK(finite_diff_check(build, w, 1e-3).max_relative_error < 1e-4);
    CHECK(finite_diff_check(build, b, 1e-3).max_relative_error < 1e-4);
  }
  SUBCASE("frozen parameters and bad arguments") {
    Parameter frozen{"f", Tensor({2}, 1.0f), std::nullopt, true};
    Parameter live{"l", Tensor({2}, 1.0f)};
    const LossBuilder build = [&](Graph<double>& g) {
      return g.sum(g.add(g.parameter(frozen), g.parameter(live)));
    };
    CHECK_THROWS_AS(finite_diff_check(build, frozen), std::invalid_argument);
    std::array<Parameter*, 2> both{&frozen, &live};
    const auto all = finite_diff_check_all(build, both);
    REQUIRE(all.size() == 1);
    CHECK(all[0].name == "l");
    CHECK_THROWS_AS(finite_diff_check(build, live, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check(build, live, 0.5), std::invalid_argument);
    const LossBuilder vector_loss = [&](Graph<double>& g) { return g.parameter(live); };
    CHECK_THROWS_AS(finite_diff_check(vector_loss, live), ShapeError);
  }
}

TEST_CASE("sgd with momentum") {
  SUBCASE("plain gradient step") {
    Parameter p{"p", Tensor({3}, std::vector<float>{1.0f, 2.0f, 3.0f})};
    p.grad = Tensor({3}, std::vector<float>{0.5f, -1.0f, 2.0f});
    OptimizerState s;
    s.learning_rate = 1.0f;
    s.momentum = 0.0f;
    std::array<Parameter*, 1> ps{&p};
    sgd_step(s, ps);
    CHECK(p.value == Tensor({3}, std::vector<float>{0.5f, 3.0f, 1.0f}));
    CHECK_FALSE(p.grad.has_value());
    CHECK_THROWS_AS(sgd_step(s, ps), std::logic_error);
  }
  SUBCASE("momentum accumulates velocity") {
    Parameter p{"p", Tensor({1}, 0.0f)};
    OptimizerState s;
    s.learning_rate = 0.1f;
    s.momentum = 0.5f;
    std::array<Parameter*, 1> ps{&p};
    p.grad = Tensor({1}, 1.0f);
    sgd_step(s, ps);  // v = 1, theta = -0.1
    p.grad = Tensor({1}, 1.0f);
    sgd_step(s, ps);  // v = 1.5, theta = -0.25
    CHECK(p.value[0] == doctest::Approx(-0.25));
  }
  SUBCASE("zero learning rate and frozen tensors leave values untouched") {
    SplitMix64 rng(13);
    Parameter live{"live", random_tensor(rng, {4})};
    Parameter frozen{"frozen", random_tensor(rng, {4})};
    const Tensor live0 = live.value;
    const Tensor frozen0 = frozen.value;
    OptimizerState s;
    s.frozen.insert("frozen");
    std::array<Parameter*, 2> ps{&live, &frozen};
    s.learning_rate = 0.0f;
    live.grad = random_tensor(rng, {4});
    sgd_step(s, ps);
    CHECK(bitwise_equal(live.value, live0));
    s.learning_rate = 0.05f;
    for (int i = 0; i < 100; ++i) {
      live.grad = random_tensor(rng, {4});
      frozen.grad = random_tensor(rng, {4});
      sgd_step(s, ps);
    }
    CHECK(bitwise_equal(frozen.value, frozen0));
    CHECK_FALSE(bitwise_equal(live.value, live0));
    CHECK(s.velocity.count("frozen") == 0);
  }
}

TEST_CASE("forward and backward are deterministic and finite") {
  SplitMix64 rng(14);
  Parameter w{"w", random_tensor(rng, {4, 3, 3, 3})};
  const Tensor x = random_tensor(rng, {2, 3, 6, 6});
  const Tensor t = random_tensor(rng, {2, 4, 3, 3});
  auto run = [&]() {
    w.grad.reset();
    Graph<float> g;
    const auto y = g.max_pool2x2(g.relu(g.conv2d(g.constant(x), g.parameter(w), {}, 1, 1, 1)));
    const auto loss = g.sse(y, g.constant(t));
    g.backward(loss);
    CHECK(all_finite(g.value(y)));
    return std::pair{g.value(y), *w.grad};
  };
  const auto a = run();
  const auto b = run();
  CHECK(bitwise_equal(a.first, b.first));
  CHECK(bitwise_equal(a.second, b.second));
}
