#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpnpose/graph.hpp"

namespace dpnpose {

/// Builds a scalar loss inside a fresh 64-bit graph. The checker calls it
/// once per evaluation, so it must be a pure function of the bound parameters.
using LossBuilder = std::function<Graph<double>::Var(Graph<double>&)>;

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  // Coordinates whose stencil straddled a relu/max-pool switch even after
  // shrinking the step; central differences are meaningless there.
  std::size_t kinks_skipped = 0;
};

/// Central differences (L(theta+eps) - L(theta-eps)) / (2 eps) against the
/// analytic gradient, per coordinate, all in double precision. Relative
/// error uses max(|a|, |b|, 1e-8) as the denominator. When a perturbation
/// flips a relu mask or pool argmax, the step is retried at eps/10, eps/100,
/// eps/1000 before the coordinate is skipped.
///
/// max_coordinates = 0 checks every coordinate; otherwise an evenly strided
/// subset of that size.
GradCheckResult finite_diff_check(const LossBuilder& build, Parameter& param, double eps = 1e-3,
                                  std::size_t max_coordinates = 0);

// Runs finite_diff_check over every non-frozen parameter. Frozen ones are
// not part of the check set at all.
std::vector<GradCheckResult> finite_diff_check_all(const LossBuilder& build,
                                                   std::span<Parameter* const> params,
                                                   double eps = 1e-3,
                                                   std::size_t max_coordinates = 0);

}  // namespace dpnpose
