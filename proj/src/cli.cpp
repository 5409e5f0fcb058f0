#include "dpnpose/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "dpnpose/analyze.hpp"
#include "dpnpose/checkpoint.hpp"
#include "dpnpose/decode.hpp"
#include "dpnpose/gradsuite.hpp"
#include "dpnpose/synthdata.hpp"
#include "dpnpose/train.hpp"

namespace dpnpose {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw UsageError("empty element in list '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw UsageError(what + ": '" + s + "' is not an integer");
  return v;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(parse_int(item, what));
  return out;
}

std::vector<double> parse_scales(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0)) throw UsageError("--scales: invalid scale '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::pair<int, int> parse_dims(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("--input: expected HxW, got '" + s + "'");
  const int h = parse_int(s.substr(0, x), "--input");
  const int w = parse_int(s.substr(x + 1), "--input");
  if (h <= 0 || w <= 0 || h % 8 != 0 || w % 8 != 0) {
    throw UsageError("--input: " + s + " must be positive and divisible by 8");
  }
  return {h, w};
}

ProjectConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  ProjectConfig cfg = path.empty() ? ProjectConfig{} : ProjectConfig::load(path);
  if (seed) {
    cfg.seed = *seed;
    cfg.synth.seed = *seed;
  }
  return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

// Options shared by the subcommands that accept them.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Plain-text key = value config file");
}

void add_seed(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Seed for every random choice (overrides config seed)");
}

struct TrainArgs {
  Common common;
  std::optional<int> steps;
  std::string checkpoint = "dpnpose.ckpt";
  std::string log;
  bool eval = false;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  ProjectConfig cfg = load_config(a.common.config, a.common.seed);
  if (a.steps) cfg.train.steps = *a.steps;
  Trainer trainer(cfg);
  if (a.log.empty()) {
    trainer.run(&out);
  } else {
    std::ofstream log(a.log);
    if (!log) throw std::runtime_error("cannot open " + a.log + " for writing");
    trainer.run(&log);
  }
  save_checkpoint(a.checkpoint, make_checkpoint(trainer.config(), trainer.network(), trainer.optimizer(),
                                                trainer.steps_done()));
  out << "saved " << a.checkpoint << " after " << trainer.steps_done() << " steps\n";
  if (a.eval) {
    const PckCounts c = evaluate_pck(trainer.network(), cfg, make_split(cfg.train.n_train, cfg.train.n_eval));
    out << "PCK@" << cfg.decode.pck_alpha << " = " << std::fixed << std::setprecision(4) << c.fraction()
        << " (" << c.correct << "/" << c.total << ")\n";
  }
  return kExitOk;
}

struct DecodeArgs {
  std::string checkpoint;
  std::optional<std::uint64_t> scene;
  std::string image;
  std::string scales;
};

int run_decode(const DecodeArgs& a, std::ostream& out) {
  if (a.scene && !a.image.empty()) throw UsageError("--scene and --image are mutually exclusive");
  LoadedModel m = model_from_checkpoint(load_checkpoint(a.checkpoint));
  if (!a.scales.empty()) m.config.decode.scales = parse_scales(a.scales);
  Tensor image;
  if (!a.image.empty()) {
    image = read_ppm(a.image);
  } else {
    image = generate_scene(m.config.synth, a.scene.value_or(0)).image;
  }
  const StageOutput maps = multi_scale_infer(*m.network, image, m.config.decode.scales);
  const auto poses = decode_maps(maps.heatmaps, maps.pafs, m.config.synth.skeleton.limbs,
                                 m.network->config().stride(), m.config.decode);
  out << "person\ttype\tx\ty\tscore\n";
  for (std::size_t p = 0; p < poses.size(); ++p) {
    for (std::size_t j = 0; j < poses[p].keypoints.size(); ++j) {
      const auto& k = poses[p].keypoints[j];
      if (!k) continue;
      out << p << '\t' << j << '\t' << k->x << '\t' << k->y << '\t' << k->score << '\n';
    }
  }
  return kExitOk;
}

struct BenchArgs {
  Common common;
  std::string arch = "both";
  std::string stages = "3,4,5,6";
  std::string input = "184x184";
  int reps = 0;
  int warmup = 1;
  std::string time_stages = "6,3";
  std::string size_out;
  std::string timing_out;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  const ProjectConfig cfg = load_config(a.common.config, a.common.seed);
  std::vector<Arch> arches;
  if (a.arch == "both") {
    arches = {Arch::baseline, Arch::dpn};
  } else {
    try {
      arches = {parse_arch(a.arch)};
    } catch (const ConfigError&) {
      throw UsageError("--arch must be dpn, baseline or both, got '" + a.arch + "'");
    }
  }
  const std::vector<int> stages = parse_int_list(a.stages, "--stages");
  for (int s : stages) {
    if (s < 1) throw UsageError("--stages: stage counts must be >= 1");
  }
  const auto [h, w] = parse_dims(a.input);
  const std::vector<int> time_stages = parse_int_list(a.time_stages, "--time-stages");
  if (time_stages.size() != 2 || time_stages[0] < 1 || time_stages[1] < 1) {
    throw UsageError("--time-stages: expected two stage counts BASELINE,DPN");
  }
  if (a.reps != 0 && a.reps < 3) throw UsageError("--reps must be 0 (no timing) or >= 3");
  if (a.warmup < 0) throw UsageError("--warmup must be >= 0");

  std::vector<NetworkConfig> configs;
  for (Arch arch : arches) {
    NetworkConfig c = cfg.network;
    c.arch = arch;
    configs.push_back(c);
  }

  const TextTable sizes = size_table(configs, stages);
  out << "Model size (MB)\n" << sizes.text;
  for (const auto& c : configs) {
    NetworkConfig three = c;
    three.stages = std::max(3, c.stages);
    const CostReport r = count_params(three);
    out << table_row_name(c.arch) << " increment per stage: " << std::fixed << std::setprecision(2)
        << r.stage_increment_mb(three.stages) << " MB\n";
    out.unsetf(std::ios::floatfield);
  }
  out << '\n';

  std::vector<TimingResult> timings(configs.size());
  std::vector<TimingRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    NetworkConfig c = configs[i];
    c.stages = c.arch == Arch::baseline ? time_stages[0] : time_stages[1];
    TimingRow row;
    row.network = table_row_name(c.arch) + "@" + std::to_string(c.stages) + "stages";
    row.macs = count_flops(c, h, w);
    if (a.reps > 0) {
      PoseNetwork net(c, cfg.seed);
      timings[i] = bench_forward(net, h, w, a.warmup, a.reps);
      row.timing = &timings[i];
    }
    rows.push_back(row);
  }
  const TextTable timing = timing_table(rows, h, w);
  out << "Forward time, single " << h << "x" << w << " frame"
      << (a.reps > 0 ? " (" + std::to_string(a.reps) + " reps)" : " (timing disabled, pass --reps N)")
      << "\n" << timing.text;

  if (!a.size_out.empty()) write_file(a.size_out, sizes.tsv);
  if (!a.timing_out.empty()) write_file(a.timing_out, timing.tsv);
  return kExitOk;
}

struct GradArgs {
  Common common;
  double eps = 1e-3;
  double tolerance = 1e-4;
};

int run_gradcheck(const GradArgs& a, std::ostream& out, std::ostream& err) {
  const auto results = run_gradient_suite(a.common.seed.value_or(1), a.eps);
  out << "case\tmax_rel_error\tcoordinates\tkinks_skipped\n";
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    out << r.name << '\t' << std::scientific << std::setprecision(3) << r.max_relative_error
        << std::defaultfloat << '\t' << r.coordinates << '\t' << r.kinks_skipped << '\n';
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.name;
    }
  }
  if (worst >= a.tolerance) {
    err << "dpnpose: gradient check failed: " << worst_name << " has relative error " << worst
        << " >= " << a.tolerance << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct RenderArgs {
  Common common;
  std::uint64_t scene = 0;
  std::string out_dir = ".";
};

int run_render(const RenderArgs& a, std::ostream& out) {
  const ProjectConfig cfg = load_config(a.common.config, a.common.seed);
  const Scene scene = generate_scene(cfg.synth, a.scene);
  const TargetMaps maps = render_targets(scene.annotation, cfg.network.stride(), cfg.targets);
  const int types = scene.annotation.keypoint_types();
  const int h = maps.heatmaps.dim(1);
  const int w = maps.heatmaps.dim(2);
  Tensor heat({h, w});
  Tensor paf({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float m = 0.0f;
      for (int j = 0; j < types; ++j) m = std::max(m, maps.heatmaps[(static_cast<std::size_t>(j) * h + y) * w + x]);
      heat[static_cast<std::size_t>(y) * w + x] = m;
      float p = 0.0f;
      for (int c = 0; c + 1 < maps.pafs.dim(0); c += 2) {
        const float vx = maps.pafs[(static_cast<std::size_t>(c) * h + y) * w + x];
        const float vy = maps.pafs[(static_cast<std::size_t>(c + 1) * h + y) * w + x];
        p = std::max(p, std::min(1.0f, std::hypot(vx, vy)));
      }
      paf[static_cast<std::size_t>(y) * w + x] = p;
    }
  }
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  const std::string stem = "scene" + std::to_string(a.scene);
  write_ppm(dir / (stem + ".ppm"), scene.image);
  write_pgm(dir / (stem + "_heatmaps.pgm"), heat);
  write_pgm(dir / (stem + "_pafs.pgm"), paf);
  write_file(dir / (stem + ".txt"), annotation_to_text(scene.annotation));
  out << "wrote " << (dir / stem).string() << "{.ppm,_heatmaps.pgm,_pafs.pgm,.txt}\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::optional<int> n_eval;
  std::string scales;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  LoadedModel m = model_from_checkpoint(load_checkpoint(a.checkpoint));
  if (a.n_eval) {
    if (*a.n_eval < 1) throw UsageError("--n-eval must be >= 1");
    m.config.train.n_eval = *a.n_eval;
  }
  if (!a.scales.empty()) m.config.decode.scales = parse_scales(a.scales);
  const PckCounts c = evaluate_pck(*m.network, m.config, make_split(m.config.train.n_train, m.config.train.n_eval));
  out << "PCK@" << m.config.decode.pck_alpha << " = " << std::fixed << std::setprecision(4) << c.fraction()
      << " (" << c.correct << "/" << c.total << " keypoints, " << m.config.train.n_eval << " scenes)\n";
  return kExitOk;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stage pose network with dual-path stages: train, decode, analyze", "dpnpose"};
  app.require_subcommand(1);
  app.fallthrough(false);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic split and save a checkpoint");
  add_config(train_cmd, train.common);
  add_seed(train_cmd, train.common);
  train_cmd->add_option("--steps", train.steps, "Override train.steps");
  train_cmd->add_option("--checkpoint", train.checkpoint, "Output checkpoint path")->capture_default_str();
  train_cmd->add_option("--log", train.log, "Write the loss table here instead of stdout");
  train_cmd->add_flag("--eval", train.eval, "Report PCK on the evaluation split afterwards");

  DecodeArgs decode;
  auto* decode_cmd = app.add_subcommand("decode", "Decode poses from a scene or a PPM image");
  decode_cmd->add_option("--checkpoint", decode.checkpoint, "Checkpoint path")->required();
  decode_cmd->add_option("--scene", decode.scene, "Synthetic scene index (default 0)");
  decode_cmd->add_option("--image", decode.image, "Binary PPM (P6) image");
  decode_cmd->add_option("--scales", decode.scales, "Comma-separated inference scales");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Model size table and forward timing");
  add_config(bench_cmd, bench.common);
  add_seed(bench_cmd, bench.common);
  bench_cmd->add_option("--arch", bench.arch, "dpn, baseline or both")->capture_default_str();
  bench_cmd->add_option("--stages", bench.stages, "Stage counts for the size table")->capture_default_str();
  bench_cmd->add_option("--input", bench.input, "Input HxW for MACs and timing")->capture_default_str();
  bench_cmd->add_option("--reps", bench.reps, "Timed forward passes (0 disables timing, else >= 3)")
      ->capture_default_str();
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed forward passes")->capture_default_str();
  bench_cmd->add_option("--time-stages", bench.time_stages, "Stage counts timed as BASELINE,DPN")
      ->capture_default_str();
  bench_cmd->add_option("--size-out", bench.size_out, "Write the size table as TSV");
  bench_cmd->add_option("--timing-out", bench.timing_out, "Write the timing table as TSV");

  GradArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  add_seed(grad_cmd, grad.common);
  grad_cmd->add_option("--eps", grad.eps, "Central difference step")->capture_default_str();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Write a synthetic scene and its target maps");
  add_config(render_cmd, render.common);
  add_seed(render_cmd, render.common);
  render_cmd->add_option("--scene", render.scene, "Scene index")->capture_default_str();
  render_cmd->add_option("--out", render.out_dir, "Output directory")->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "PCK of a checkpoint on the synthetic evaluation split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--n-eval", eval.n_eval, "Override the number of evaluation scenes");
  eval_cmd->add_option("--scales", eval.scales, "Comma-separated inference scales");

  if (argc < 2) {
    err << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dpnpose: " << e.what() << " (run with --help for usage)\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(train, out);
    if (decode_cmd->parsed()) return run_decode(decode, out);
    if (bench_cmd->parsed()) return run_bench(bench, out);
    if (grad_cmd->parsed()) return run_gradcheck(grad, out, err);
    if (render_cmd->parsed()) return run_render(render, out);
    if (eval_cmd->parsed()) return run_eval(eval, out);
  } catch (const UsageError& e) {
    err << "dpnpose: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "dpnpose: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace dpnpose
