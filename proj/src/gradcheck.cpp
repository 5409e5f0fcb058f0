#include "dpnpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpnpose {

namespace {

struct Evaluation {
  double loss;
  std::uint64_t kinks;
};

Evaluation evaluate(const LossBuilder& build, const Parameter& param, const TensorD* value) {
  GraphOptions opts;
  opts.enable_grad = false;
  opts.trace_kinks = true;
  Graph<double> g(opts);
  if (value != nullptr) g.override_parameter(param, *value);
  auto loss = build(g);
  const auto& lv = g.value(loss);
  if (lv.size() != 1) {
    throw ShapeError("finite_diff_check: loss must be a scalar, got shape " + shape_str(lv.shape()));
  }
  return {lv[0], g.kink_hash()};
}

}  // namespace

GradCheckResult finite_diff_check(const LossBuilder& build, Parameter& param, double eps,
                                  std::size_t max_coordinates) {
  if (!(eps > 0.0 && eps <= 1e-1)) {
    throw std::invalid_argument("finite_diff_check: eps must lie in (0, 0.1]");
  }
  if (param.frozen) {
    throw std::invalid_argument("finite_diff_check: parameter " + param.name +
                                " is frozen and excluded from checking");
  }

  GraphOptions opts;
  opts.write_parameter_grads = false;
  opts.trace_kinks = true;
  Graph<double> base(opts);
  auto loss = build(base);
  if (base.value(loss).size() != 1) {
    throw ShapeError("finite_diff_check: loss must be a scalar, got shape " +
                     shape_str(base.value(loss).shape()));
  }
  base.backward(loss);
  const std::uint64_t base_kinks = base.kink_hash();
  const TensorD analytic = base.grad(base.parameter(param));
  const TensorD theta = param.value.cast<double>();

  GradCheckResult result;
  result.name = param.name;
  const std::size_t n = theta.size();
  const std::size_t count = max_coordinates == 0 ? n : std::min(n, max_coordinates);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = count == n ? k : (k * n) / count;
    double step = eps;
    bool smooth = false;
    double numeric = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt, step /= 10.0) {
      TensorD plus = theta;
      TensorD minus = theta;
      plus[i] += step;
      minus[i] -= step;
      const Evaluation ep = evaluate(build, param, &plus);
      const Evaluation em = evaluate(build, param, &minus);
      if (ep.kinks == base_kinks && em.kinks == base_kinks) {
        numeric = (ep.loss - em.loss) / (2.0 * step);
        smooth = true;
        break;
      }
    }
    if (!smooth) {
      ++result.kinks_skipped;
      continue;
    }
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.coordinates;
  }
  return result;
}

std::vector<GradCheckResult> finite_diff_check_all(const LossBuilder& build,
                                                   std::span<Parameter* const> params, double eps,
                                                   std::size_t max_coordinates) {
  std::vector<GradCheckResult> out;
  for (Parameter* p : params) {
    if (p->frozen) continue;
    out.push_back(finite_diff_check(build, *p, eps, max_coordinates));
  }
  return out;
}

}  // namespace dpnpose
