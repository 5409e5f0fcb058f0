#include <doctest.h>

#include <array>

#include "dpnpose/posenet.hpp"
#include "dpnpose/train.hpp"
#include "oracles.hpp"

using namespace dpnpose;
using oracle::random_tensor;

namespace {

std::uint64_t tensor_elements(std::span<Parameter* const> ps) {
  std::uint64_t n = 0;
  for (const Parameter* p : ps) n += p->value.size();
  return n;
}

// Conv layer weights plus biases, counted by hand.
std::uint64_t conv_count(std::uint64_t in, std::uint64_t out, std::uint64_t k, std::uint64_t groups = 1) {
  return out * (in / groups) * k * k + out;
}

NetworkConfig small_dpn(int stages) {
  NetworkConfig c = NetworkConfig::tiny();
  c.stages = stages;
  return c;
}

}  // namespace

TEST_CASE("default frontend has stride 8, 128 output channels and the documented size") {
  NetworkConfig cfg;
  cfg.stages = 1;
  PoseNetwork net(cfg, 1);
  const Tensor f = net.compute_features(Tensor({1, 3, 64, 64}, 0.5f));
  CHECK(f.shape() == Shape{1, 128, 8, 8});

  const std::array<int, 12> widths{64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 256, 128};
  std::uint64_t expect = 0;
  int in = 3;
  for (int w : widths) {
    expect += conv_count(in, w, 3);
    in = w;
  }
  CHECK(expect == 7340480);
  CHECK(tensor_elements(net.frontend_parameters()) == expect);
  for (const Parameter* p : net.frontend_parameters()) CHECK(p->frozen);

  NetworkConfig unfrozen = cfg;
  unfrozen.freeze_frontend = false;
  PoseNetwork net2(unfrozen, 1);
  for (const Parameter* p : net2.frontend_parameters()) CHECK_FALSE(p->frozen);
}

TEST_CASE("input dims must be divisible by the stride") {
  PoseNetwork net(NetworkConfig::tiny(), 1);
  CHECK_THROWS_AS(net.infer(Tensor({1, 3, 60, 64})), ShapeError);
  CHECK_THROWS_AS(net.infer(Tensor({1, 3, 64, 36})), ShapeError);
  CHECK_THROWS_AS(net.infer(Tensor({1, 1, 64, 64})), ShapeError);
}

TEST_CASE("dpn block channel bookkeeping and zero-transform identity") {
  ParameterSet ps;
  SplitMix64 rng(2);
  auto& rw = ps.add("rw", random_tensor(rng, {8, 6, 1, 1}));
  auto& rb = ps.add("rb", random_tensor(rng, {8}));
  auto& gw = ps.add("gw", random_tensor(rng, {8, 4, 3, 3}));
  auto& gb = ps.add("gb", random_tensor(rng, {8}));
  auto& ew = ps.add("ew", random_tensor(rng, {6, 8, 1, 1}));
  auto& eb = ps.add("eb", random_tensor(rng, {6}));
  DpnBlockLayers layers{{&rw, &rb, 1}, {&gw, &gb, 2}, {&ew, &eb, 1}, 4, 2};
  const Tensor kp = random_tensor(rng, {2, 4, 5, 5});
  const Tensor ap = random_tensor(rng, {2, 2, 5, 5});

  Graph<float> g;
  const auto out = dpn_block(g, DpnBranches<float>{g.constant(kp), g.constant(ap)}, layers);
  CHECK(g.value(out.kp).shape() == Shape{2, 4, 5, 5});
  CHECK(g.value(out.ap).shape() == Shape{2, 4, 5, 5});

  for (Parameter* p : ps.all()) p->value.fill(0.0f);
  Graph<float> z;
  const auto zo = dpn_block(z, DpnBranches<float>{z.constant(kp), z.constant(ap)}, layers);
  CHECK(bitwise_equal(z.value(zo.kp), kp));
  const Tensor& grown = z.value(zo.ap);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) CHECK(grown.at(n, c, y, x) == (c < 2 ? ap.at(n, c, y, x) : 0.0f));

  Graph<float> bad;
  CHECK_THROWS_AS(dpn_block(bad, DpnBranches<float>{bad.constant(ap), bad.constant(ap)}, layers), ShapeError);
  CHECK_THROWS_AS(dpn_block(bad, DpnBranches<float>{bad.constant(kp), bad.constant(kp)}, layers), ShapeError);
}

TEST_CASE("dpn stage shapes, inputs and zero heads") {
  NetworkConfig cfg;  // default widths, J = 19, C = 38
  cfg.stages = 2;
  cfg.dpn.blocks = 2;
  PoseNetwork net(cfg, 3);
  SplitMix64 rng(3);
  const Tensor f = random_tensor(rng, {1, 128, 8, 8});
  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto fv = g.constant(f);
  const auto s1 = dpn_stage<float>(g, fv, nullptr, net.dpn_stages()[0], 1);
  CHECK(g.value(s1.heatmaps).shape() == Shape{1, 19, 8, 8});
  CHECK(g.value(s1.pafs).shape() == Shape{1, 38, 8, 8});
  CHECK(net.dpn_stages()[1].project.weight->value.dim(1) == 185);
  const auto s2 = dpn_stage(g, fv, &s1, net.dpn_stages()[1], 2);
  CHECK(g.value(s2.heatmaps).shape() == Shape{1, 19, 8, 8});
  CHECK_THROWS_AS(dpn_stage<float>(g, fv, nullptr, net.dpn_stages()[1], 2), std::invalid_argument);
  CHECK_THROWS_AS(dpn_stage(g, fv, &s1, net.dpn_stages()[0], 1), std::invalid_argument);

  for (const ConvLayer* head : {&net.dpn_stages()[1].head_heatmaps, &net.dpn_stages()[1].head_pafs}) {
    head->weight->value.fill(0.0f);
    head->bias->value.fill(0.0f);
  }
  // Parameters bind per graph, so the zeroed heads need a fresh one.
  Graph<float> z(GraphOptions{.enable_grad = false});
  const auto zf = z.constant(f);
  const auto z1 = dpn_stage<float>(z, zf, nullptr, net.dpn_stages()[0], 1);
  const auto s2z = dpn_stage(z, zf, &z1, net.dpn_stages()[1], 2);
  for (float v : z.value(s2z.heatmaps).data()) CHECK(v == 0.0f);
  for (float v : z.value(s2z.pafs).data()) CHECK(v == 0.0f);
}

TEST_CASE("channel accumulation law") {
  NetworkConfig cfg = small_dpn(2);
  PoseNetwork net(cfg, 4);
  SplitMix64 rng(4);
  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto fv = g.constant(random_tensor(rng, {1, cfg.feature_channels(), 4, 4}));
  std::vector<std::pair<int, int>> w1, w2;
  const auto s1 = dpn_stage<float>(g, fv, nullptr, net.dpn_stages()[0], 1, &w1);
  dpn_stage(g, fv, &s1, net.dpn_stages()[1], 2, &w2);
  REQUIRE(w1.size() == 1);
  REQUIRE(w2.size() == 3);
  for (std::size_t b = 0; b < w2.size(); ++b) {
    CHECK(w2[b].first == cfg.dpn.residual);
    CHECK(w2[b].second == cfg.dpn.dense + static_cast<int>(b + 1) * cfg.dpn.growth);
  }
}

TEST_CASE("baseline stage sizes and interchangeability with dpn stages") {
  NetworkConfig cfg;
  cfg.arch = Arch::baseline;
  cfg.stages = 2;
  PoseNetwork net(cfg, 5);
  // Stage 1: per branch three 3x3 at 128, 1x1 to 512, 1x1 head.
  const std::uint64_t s1 = 2 * (conv_count(128, 128, 3) * 3 + conv_count(128, 512, 1)) +
                           conv_count(512, 19, 1) + conv_count(512, 38, 1);
  // Stage t >= 2: per branch five 7x7 (first from 185), 1x1 to 128, 1x1 head.
  const std::uint64_t s2 = 2 * (conv_count(185, 128, 7) + 4 * conv_count(128, 128, 7) + conv_count(128, 128, 1)) +
                           conv_count(128, 19, 1) + conv_count(128, 38, 1);
  CHECK(s1 == 1046841);
  CHECK(s2 == 8784825);
  CHECK(tensor_elements(net.stage_parameters(1)) == s1);
  CHECK(tensor_elements(net.stage_parameters(2)) == s2);

  NetworkConfig small = NetworkConfig::tiny();
  small.arch = Arch::baseline;
  small.baseline = BaselineParams{16, 32, 3, 5, 7};
  PoseNetwork base(small, 5);
  PoseNetwork dpn(NetworkConfig::tiny(), 5);
  const Tensor img = Tensor({1, 3, 32, 40}, 0.25f);
  const auto a = base.infer(img);
  const auto b = dpn.infer(img);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    CHECK(a[t].heatmaps.shape() == b[t].heatmaps.shape());
    CHECK(a[t].pafs.shape() == b[t].pafs.shape());
    CHECK(a[t].heatmaps.shape() == Shape{1, 6, 4, 5});
  }

  Graph<float> g(GraphOptions{.enable_grad = false});
  const auto fv = g.constant(Tensor({1, 32, 4, 4}));
  CHECK_THROWS_AS(baseline_stage<float>(g, fv, nullptr, base.baseline_stages()[1], 2), std::invalid_argument);
}

TEST_CASE("forward returns every stage, deterministically") {
  NetworkConfig cfg = small_dpn(3);
  SplitMix64 rng(6);
  const Tensor img = random_tensor(rng, {2, 3, 32, 32}, 0.0, 1.0);
  PoseNetwork a(cfg, 9);
  PoseNetwork b(cfg, 9);
  const auto oa = a.infer(img);
  const auto ob = b.infer(img);
  REQUIRE(oa.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(oa[t].heatmaps.shape() == Shape{2, 6, 4, 4});
    CHECK(oa[t].pafs.shape() == Shape{2, 8, 4, 4});
    CHECK(bitwise_equal(oa[t].heatmaps, ob[t].heatmaps));
    CHECK(bitwise_equal(oa[t].pafs, ob[t].pafs));
    CHECK(all_finite(oa[t].heatmaps));
  }
  PoseNetwork c(cfg, 10);
  CHECK_FALSE(bitwise_equal(c.infer(img)[0].heatmaps, oa[0].heatmaps));
}

TEST_CASE("total loss reaches stage-1 parameters") {
  NetworkConfig cfg = small_dpn(2);
  PoseNetwork net(cfg, 11);
  SplitMix64 rng(11);
  Graph<float> g;
  const auto outs = net.forward(g, g.constant(random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0)));
  const auto loss = total_loss<float>(g, outs, g.constant(random_tensor(rng, {1, 6, 4, 4})),
                                      g.constant(random_tensor(rng, {1, 8, 4, 4})));
  g.backward(loss);
  for (Parameter* p : net.stage_parameters(1)) {
    if (p->name.find(".weight") == std::string::npos) continue;
    REQUIRE(p->grad.has_value());
    double norm = 0.0;
    for (float v : p->grad->data()) norm += std::abs(v);
    CHECK(norm > 0.0);
  }
  for (Parameter* p : net.frontend_parameters()) CHECK_FALSE(p->grad.has_value());
}

TEST_CASE("gradient reaching F is the sum of per-stage contributions") {
  NetworkConfig cfg = small_dpn(2);
  PoseNetwork net(cfg, 12);
  SplitMix64 rng(12);
  const Tensor f = random_tensor(rng, {1, cfg.feature_channels(), 4, 4});
  const Tensor th = random_tensor(rng, {1, 6, 4, 4});
  const Tensor tp = random_tensor(rng, {1, 8, 4, 4});
  auto grad_f = [&](int which) {  // 0 = all stages, t = only stage t's loss
    Graph<float> g(GraphOptions{.write_parameter_grads = false});
    const auto fv = g.leaf(f, true);
    const auto outs = net.run_stages(g, fv);
    Graph<float>::Var loss;
    for (int t = 1; t <= 2; ++t) {
      if (which != 0 && which != t) continue;
      const auto l = stage_losses(g, outs[t - 1], g.constant(th), g.constant(tp));
      const auto s = g.add(l.heatmaps, l.pafs);
      loss = loss.valid() ? g.add(loss, s) : s;
    }
    g.backward(loss);
    return g.grad(fv);
  };
  const Tensor all = grad_f(0);
  const Tensor one = grad_f(1);
  const Tensor two = grad_f(2);
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i] == doctest::Approx(one[i] + two[i]).epsilon(1e-4).scale(1.0));
  }
}
