#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dpnpose {

struct GradSuiteEntry {
  std::string name;  // primitive or network under test
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t kinks_skipped = 0;
};

/// Finite-difference checks, in double precision, of every differentiable
/// graph op on random inputs no larger than (2,8,6,6), one DPN block, and a
/// 2-stage tiny DPN network. Each entry holds the worst error over all
/// parameters and inputs of that case.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed, double eps = 1e-3);

}  // namespace dpnpose
