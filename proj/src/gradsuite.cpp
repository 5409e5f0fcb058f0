#include "dpnpose/gradsuite.hpp"

#include <algorithm>
#include <array>

#include "dpnpose/gradcheck.hpp"
#include "dpnpose/posenet.hpp"
#include "dpnpose/rng.hpp"
#include "dpnpose/train.hpp"

namespace dpnpose {

namespace {

Tensor random_tensor(SplitMix64& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

using Body = std::function<Graph<double>::Var(Graph<double>&, std::vector<Graph<double>::Var>&)>;

GradSuiteEntry check_case(const std::string& name, ParameterSet& params, const Body& body,
                          double eps, std::size_t max_coordinates = 0) {
  const LossBuilder build = [&](Graph<double>& g) {
    std::vector<Graph<double>::Var> vars;
    for (Parameter* p : params.all()) vars.push_back(g.parameter(*p));
    return body(g, vars);
  };
  GradSuiteEntry entry;
  entry.name = name;
  for (const auto& r : finite_diff_check_all(build, params.all(), eps, max_coordinates)) {
    entry.max_relative_error = std::max(entry.max_relative_error, r.max_relative_error);
    entry.coordinates += r.coordinates;
    entry.kinks_skipped += r.kinks_skipped;
  }
  return entry;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double eps) {
  SplitMix64 rng(seed, 0x67726164);
  std::vector<GradSuiteEntry> out;
  using Var = Graph<double>::Var;

  auto target = [&](Shape s) { return random_tensor(rng, std::move(s)).cast<double>(); };

  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 4, 6, 6}));
    ps.add("w", random_tensor(rng, {6, 2, 3, 3}, 0.5));
    ps.add("b", random_tensor(rng, {6}));
    const TensorD t = target({2, 6, 6, 6});
    out.push_back(check_case("conv2d 3x3 grouped", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.conv2d(v[0], v[1], v[2], 1, 1, 2), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 3, 6, 6}));
    ps.add("w", random_tensor(rng, {4, 3, 3, 3}, 0.5));
    ps.add("b", random_tensor(rng, {4}));
    const TensorD t = target({2, 4, 3, 3});
    out.push_back(check_case("conv2d 3x3 stride 2", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.conv2d(v[0], v[1], v[2], 2, 1, 1), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 8, 5, 5}));
    ps.add("w", random_tensor(rng, {5, 8, 1, 1}, 0.5));
    ps.add("b", random_tensor(rng, {5}));
    const TensorD t = target({2, 5, 5, 5});
    out.push_back(check_case("conv2d 1x1", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.conv2d(v[0], v[1], v[2], 1, 0, 1), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 3, 5, 5}));
    const TensorD t = target({2, 3, 5, 5});
    out.push_back(check_case("relu", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.relu(v[0]), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("a", random_tensor(rng, {2, 3, 4, 4}));
    ps.add("b", random_tensor(rng, {2, 3, 4, 4}));
    const TensorD t = target({2, 3, 4, 4});
    out.push_back(check_case("add", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.add(v[0], v[1]), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("a", random_tensor(rng, {2, 3, 4, 4}));
    ps.add("b", random_tensor(rng, {2, 5, 4, 4}));
    const TensorD t = target({2, 8, 4, 4});
    out.push_back(check_case("concat", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      const std::array<Var, 2> parts{v[0], v[1]};
      return g.sse(g.concat(parts), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 8, 4, 4}));
    const TensorD t = target({2, 3, 4, 4});
    out.push_back(check_case("slice_channels", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.slice_channels(v[0], 2, 3), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 3, 6, 6}));
    const TensorD t = target({2, 3, 3, 3});
    out.push_back(check_case("max_pool2x2", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.max_pool2x2(v[0]), g.constant(t));
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("pred", random_tensor(rng, {2, 4, 3, 3}));
    ps.add("target", random_tensor(rng, {2, 4, 3, 3}));
    out.push_back(check_case("sse", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(v[0], v[1]);
    }, eps));
  }
  {
    ParameterSet ps;
    ps.add("x", random_tensor(rng, {2, 3, 4, 4}));
    const TensorD t = target({});
    out.push_back(check_case("sum", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      return g.sse(g.sum(v[0]), g.constant(t));
    }, eps));
  }

  // One DPN block: r = 4, d0 = 3, g = 2, w = 8, G = 2.
  {
    ParameterSet ps;
    ps.add("kp", random_tensor(rng, {2, 4, 5, 5}));
    ps.add("ap", random_tensor(rng, {2, 3, 5, 5}));
    auto& rw = ps.add("reduce.weight", random_tensor(rng, {8, 7, 1, 1}, 0.5));
    auto& rb = ps.add("reduce.bias", random_tensor(rng, {8}, 0.2));
    auto& gw = ps.add("grouped.weight", random_tensor(rng, {8, 4, 3, 3}, 0.3));
    auto& gb = ps.add("grouped.bias", random_tensor(rng, {8}, 0.2));
    auto& ew = ps.add("expand.weight", random_tensor(rng, {6, 8, 1, 1}, 0.5));
    auto& eb = ps.add("expand.bias", random_tensor(rng, {6}, 0.2));
    DpnBlockLayers layers;
    layers.reduce = {&rw, &rb, 1};
    layers.grouped = {&gw, &gb, 2};
    layers.expand = {&ew, &eb, 1};
    layers.residual = 4;
    layers.growth = 2;
    const TensorD tk = target({2, 4, 5, 5});
    const TensorD ta = target({2, 5, 5, 5});
    out.push_back(check_case("dpn_block", ps, [&](Graph<double>& g, std::vector<Var>& v) {
      const auto br = dpn_block(g, DpnBranches<double>{v[0], v[1]}, layers);
      return g.add(g.sse(br.kp, g.constant(tk)), g.sse(br.ap, g.constant(ta)));
    }, eps));
  }

  // Tiny 2-stage DPN on fixed features, full intermediate-supervision loss.
  {
    const NetworkConfig cfg = NetworkConfig::tiny();
    PoseNetwork net(cfg, seed);
    const TensorD features = random_tensor(rng, {1, cfg.feature_channels(), 4, 4}, 0.5).cast<double>();
    Tensor th({1, cfg.keypoints, 4, 4});
    for (auto& v : th.data()) v = static_cast<float>(rng.uniform());
    const TensorD heat = th.cast<double>();
    const TensorD pafs = random_tensor(rng, {1, cfg.pafs, 4, 4}).cast<double>();
    const LossBuilder build = [&](Graph<double>& g) {
      const auto outs = net.run_stages(g, g.constant(features));
      return total_loss<double>(g, outs, g.constant(heat), g.constant(pafs));
    };
    GradSuiteEntry entry;
    entry.name = "tiny dpn (2 stages)";
    for (const auto& r : finite_diff_check_all(build, net.parameters().all(), eps, 48)) {
      entry.max_relative_error = std::max(entry.max_relative_error, r.max_relative_error);
      entry.coordinates += r.coordinates;
      entry.kinks_skipped += r.kinks_skipped;
    }
    out.push_back(entry);
  }
  return out;
}

}  // namespace dpnpose
