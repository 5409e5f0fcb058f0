#include "dpnpose/analyze.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace dpnpose {

namespace {

class RowBuilder {
 public:
  RowBuilder(CostReport& report, int h, int w) : report_(report), h_(h), w_(w) {}

  void conv(const std::string& name, int stage, int kernel, int in, int out, int groups = 1) {
    CostRow r;
    r.name = name;
    r.stage = stage;
    r.kernel = kernel;
    r.in_channels = in;
    r.out_channels = out;
    r.groups = groups;
    const std::uint64_t per_out = static_cast<std::uint64_t>(in / groups) * kernel * kernel;
    r.params = out * per_out + out;
    if (h_ > 0) {
      r.out_height = h_;
      r.out_width = w_;
      r.macs = static_cast<std::uint64_t>(h_) * w_ * out * per_out;
    }
    report_.rows.push_back(std::move(r));
  }

  void pool() {
    h_ /= 2;
    w_ /= 2;
  }

 private:
  CostReport& report_;
  int h_;
  int w_;
};

}  // namespace

CostReport cost_report(const NetworkConfig& config, int input_height, int input_width) {
  config.validate();
  const int stride = config.stride();
  if (input_height < 0 || input_width < 0 || input_height % stride != 0 || input_width % stride != 0) {
    throw std::invalid_argument("cost_report: input " + std::to_string(input_height) + "x" +
                                std::to_string(input_width) + " must be divisible by " +
                                std::to_string(stride));
  }
  CostReport rep;
  rep.arch = config.arch;
  rep.stages = config.stages;
  rep.input_height = input_height;
  rep.input_width = input_width;
  RowBuilder b(rep, input_height, input_width);

  int channels = 3;
  int index = 0;
  for (const auto& l : config.frontend) {
    if (l.pool) {
      b.pool();
      continue;
    }
    b.conv("frontend.conv" + std::to_string(++index), 0, 3, channels, l.channels);
    channels = l.channels;
  }

  const int feat = config.feature_channels();
  const int J = config.keypoints;
  const int C = config.pafs;
  for (int t = 1; t <= config.stages; ++t) {
    const std::string prefix = "stage" + std::to_string(t) + ".";
    const int in = t == 1 ? feat : feat + J + C;
    if (config.arch == Arch::dpn) {
      const DpnParams& p = config.dpn;
      b.conv(prefix + "project", t, 1, in, p.residual + p.dense);
      const int blocks = t == 1 ? p.blocks_first : p.blocks;
      for (int k = 1; k <= blocks; ++k) {
        const std::string bp = prefix + "block" + std::to_string(k) + ".";
        b.conv(bp + "reduce", t, 1, p.residual + p.dense + (k - 1) * p.growth, p.bottleneck);
        b.conv(bp + "grouped", t, 3, p.bottleneck, p.bottleneck, p.cardinality);
        b.conv(bp + "expand", t, 1, p.bottleneck, p.residual + p.growth);
      }
      b.conv(prefix + "head_heatmaps", t, 1, p.residual, J);
      b.conv(prefix + "head_pafs", t, 1, p.dense + blocks * p.growth, C);
    } else {
      const BaselineParams& p = config.baseline;
      for (int branch = 0; branch < 2; ++branch) {
        const std::string bp = prefix + (branch == 0 ? "heatmaps." : "pafs.");
        const int convs = t == 1 ? p.first_convs : p.later_convs;
        const int kernel = t == 1 ? 3 : p.later_kernel;
        int c = in;
        for (int i = 1; i <= convs; ++i) {
          b.conv(bp + "conv" + std::to_string(i), t, kernel, c, p.width);
          c = p.width;
        }
        const int hidden = t == 1 ? p.first_hidden : p.width;
        b.conv(bp + "conv" + std::to_string(convs + 1), t, 1, c, hidden);
        b.conv(bp + "head", t, 1, hidden, branch == 0 ? J : C);
      }
    }
  }

  rep.stage_params.assign(config.stages + 1, 0);
  for (const auto& r : rep.rows) {
    rep.params += r.params;
    rep.macs += r.macs;
    rep.stage_params[r.stage] += r.params;
  }
  return rep;
}

CostReport count_params(const NetworkConfig& config) { return cost_report(config); }

std::uint64_t count_flops(const NetworkConfig& config, int input_height, int input_width) {
  if (input_height <= 0 || input_width <= 0) {
    throw std::invalid_argument("count_flops: input size must be positive");
  }
  return cost_report(config, input_height, input_width).macs;
}

TimingResult bench_forward(PoseNetwork& network, int input_height, int input_width, int warmup,
                           int reps) {
  if (reps < 3) throw std::invalid_argument("bench_forward: reps must be >= 3");
  if (warmup < 0) throw std::invalid_argument("bench_forward: warmup must be >= 0");
  Tensor input({1, 3, input_height, input_width});
  input.fill(0.5f);
  for (int i = 0; i < warmup; ++i) network.infer(input);
  TimingResult r;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    network.infer(input);
    const auto t1 = std::chrono::steady_clock::now();
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  r.mean_ms = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / reps;
  double ss = 0.0;
  for (double s : r.samples_ms) ss += (s - r.mean_ms) * (s - r.mean_ms);
  r.std_ms = std::sqrt(ss / (reps - 1));
  return r;
}

std::string table_row_name(Arch arch) { return arch == Arch::baseline ? "openpose" : "dpn"; }

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

TextTable render(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  TextTable t;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      t.text += i == 0 ? pad_right(row[i], widths[i]) : "  " + pad_left(row[i], widths[i]);
      t.tsv += (i == 0 ? "" : "\t") + row[i];
    }
    t.text += '\n';
    t.tsv += '\n';
  }
  return t;
}

}  // namespace

TextTable size_table(std::span<const NetworkConfig> architectures, std::span<const int> stages) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"network"};
  for (int s : stages) {
    if (s < 1) throw std::invalid_argument("size_table: stage counts must be >= 1");
    header.push_back(std::to_string(s) + " stages");
  }
  cells.push_back(std::move(header));
  for (const auto& arch : architectures) {
    std::vector<std::string> row{table_row_name(arch.arch)};
    for (int s : stages) {
      NetworkConfig c = arch;
      c.stages = s;
      row.push_back(fmt("%.1f", count_params(c).megabytes()));
    }
    cells.push_back(std::move(row));
  }
  return render(cells);
}

TextTable timing_table(std::span<const TimingRow> rows, int input_height, int input_width) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"network", "time (ms)", "std (ms)",
                   "GMAC@" + std::to_string(input_height) + "x" + std::to_string(input_width)});
  for (const auto& r : rows) {
    cells.push_back({r.network, r.timing ? fmt("%.1f", r.timing->mean_ms) : "-",
                     r.timing ? fmt("%.1f", r.timing->std_ms) : "-",
                     fmt("%.3f", static_cast<double>(r.macs) / 1e9)});
  }
  return render(cells);
}

}  // namespace dpnpose
