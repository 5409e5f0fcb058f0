#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/posenet.hpp"

namespace dpnpose {

struct CostRow {
  std::string name;
  int stage = 0;  // 0 = frontend
  int kernel = 1;
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;
  int out_height = 0;  // 0 when no input size was given
  int out_width = 0;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  Arch arch = Arch::dpn;
  int stages = 0;
  int input_height = 0;
  int input_width = 0;
  std::vector<CostRow> rows;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::vector<std::uint64_t> stage_params;  // [0] = frontend, [t] = stage t

  double megabytes() const { return bytes_to_mb(params); }
  // Size added by stage t (t >= 1) in MB.
  double stage_increment_mb(int t) const { return bytes_to_mb(stage_params.at(t)); }

  // 4-byte floats, decimal megabytes.
  static double bytes_to_mb(std::uint64_t params) { return static_cast<double>(params) * 4.0 / 1e6; }
};

/// Conv parameters Cout * (Cin / G) * kh * kw + Cout per layer, enumerated
/// from the configuration alone (no tensors are allocated). With a nonzero
/// input size the rows also carry MACs: out pixels * Cout * (Cin / G) * kh * kw.
CostReport cost_report(const NetworkConfig& config, int input_height = 0, int input_width = 0);

CostReport count_params(const NetworkConfig& config);
std::uint64_t count_flops(const NetworkConfig& config, int input_height, int input_width);

struct TimingResult {
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample standard deviation
};

/// Wall-clock forward time of one [1,3,H,W] input after `warmup` untimed runs.
TimingResult bench_forward(PoseNetwork& network, int input_height, int input_width, int warmup,
                           int reps);

struct TextTable {
  std::string text;  // aligned, for humans
  std::string tsv;   // tab-separated copy
};

std::string table_row_name(Arch arch);

/// One row per architecture, one column per stage count, sizes in MB.
TextTable size_table(std::span<const NetworkConfig> architectures, std::span<const int> stages);

struct TimingRow {
  std::string network;  // e.g. "dpn@3stages"
  std::uint64_t macs = 0;
  const TimingResult* timing = nullptr;  // null prints "-"
};

/// Two-column layout, one row per network: forward time and MAC count.
TextTable timing_table(std::span<const TimingRow> rows, int input_height, int input_width);

}  // namespace dpnpose
