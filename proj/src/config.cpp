#include "dpnpose/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dpnpose {

std::string_view arch_name(Arch a) { return a == Arch::dpn ? "dpn" : "baseline"; }

Arch parse_arch(std::string_view s) {
  if (s == "dpn") return Arch::dpn;
  if (s == "baseline" || s == "openpose") return Arch::baseline;
  throw ConfigError("unknown architecture '" + std::string(s) + "' (expected dpn or baseline)");
}

std::vector<FrontendLayer> default_frontend() {
  return parse_frontend("64,64,M,128,128,M,256,256,256,256,M,512,512,256,128");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int to_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(std::string(what) + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t to_u64(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(std::string(what) + ": expected an unsigned integer, got '" + std::string(s) + "'");
  }
  return v;
}

double to_double(std::string_view s, std::string_view what) {
  const auto t = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s, std::string_view what) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(std::string(what) + ": expected a boolean, got '" + std::string(s) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string fmt_float(float v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, const char* sep, F&& f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += f(xs[i]);
  }
  return out;
}

struct Key {
  std::string name;
  std::function<void(ProjectConfig&, std::string_view)> set;
  std::function<std::string(const ProjectConfig&)> get;
};

#define DPN_INT_KEY(NAME, FIELD)                                                         \
  Key {                                                                                  \
    NAME, [](ProjectConfig& c, std::string_view v) { c.FIELD = to_int(v, NAME); },       \
        [](const ProjectConfig& c) { return std::to_string(c.FIELD); }                   \
  }
#define DPN_DOUBLE_KEY(NAME, FIELD)                                                      \
  Key {                                                                                  \
    NAME, [](ProjectConfig& c, std::string_view v) { c.FIELD = to_double(v, NAME); },    \
        [](const ProjectConfig& c) { return fmt_double(c.FIELD); }                       \
  }
#define DPN_FLOAT_KEY(NAME, FIELD)                                                       \
  Key {                                                                                  \
    NAME,                                                                                \
        [](ProjectConfig& c, std::string_view v) {                                       \
          c.FIELD = static_cast<float>(to_double(v, NAME));                              \
        },                                                                               \
        [](const ProjectConfig& c) { return fmt_float(c.FIELD); }                        \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      Key{"seed", [](ProjectConfig& c, std::string_view v) { c.seed = to_u64(v, "seed"); },
          [](const ProjectConfig& c) { return std::to_string(c.seed); }},
      Key{"arch", [](ProjectConfig& c, std::string_view v) { c.network.arch = parse_arch(trim(v)); },
          [](const ProjectConfig& c) { return std::string(arch_name(c.network.arch)); }},
      DPN_INT_KEY("stages", network.stages),
      DPN_INT_KEY("keypoints", network.keypoints),
      DPN_INT_KEY("pafs", network.pafs),
      Key{"frontend",
          [](ProjectConfig& c, std::string_view v) { c.network.frontend = parse_frontend(v); },
          [](const ProjectConfig& c) { return frontend_to_string(c.network.frontend); }},
      Key{"freeze_frontend",
          [](ProjectConfig& c, std::string_view v) {
            c.network.freeze_frontend = to_bool(v, "freeze_frontend");
          },
          [](const ProjectConfig& c) {
            return std::string(c.network.freeze_frontend ? "true" : "false");
          }},
      DPN_INT_KEY("dpn.residual", network.dpn.residual),
      DPN_INT_KEY("dpn.dense", network.dpn.dense),
      DPN_INT_KEY("dpn.growth", network.dpn.growth),
      DPN_INT_KEY("dpn.bottleneck", network.dpn.bottleneck),
      DPN_INT_KEY("dpn.cardinality", network.dpn.cardinality),
      DPN_INT_KEY("dpn.blocks_first", network.dpn.blocks_first),
      DPN_INT_KEY("dpn.blocks", network.dpn.blocks),
      DPN_INT_KEY("baseline.width", network.baseline.width),
      DPN_INT_KEY("baseline.first_hidden", network.baseline.first_hidden),
      DPN_INT_KEY("baseline.first_convs", network.baseline.first_convs),
      DPN_INT_KEY("baseline.later_convs", network.baseline.later_convs),
      DPN_INT_KEY("baseline.later_kernel", network.baseline.later_kernel),
      DPN_INT_KEY("synth.height", synth.height),
      DPN_INT_KEY("synth.width", synth.width),
      DPN_INT_KEY("synth.max_persons", synth.max_persons),
      DPN_INT_KEY("skeleton.keypoints", synth.skeleton.keypoints),
      Key{"skeleton.limbs",
          [](ProjectConfig& c, std::string_view v) {
            c.synth.skeleton.limbs.clear();
            for (const auto& item : split(v, ',')) {
              const auto ends = split(item, '-');
              if (ends.size() != 2) {
                throw ConfigError("skeleton.limbs: expected a-b pairs, got '" + item + "'");
              }
              c.synth.skeleton.limbs.emplace_back(to_int(ends[0], "skeleton.limbs"),
                                                  to_int(ends[1], "skeleton.limbs"));
            }
          },
          [](const ProjectConfig& c) {
            return join(c.synth.skeleton.limbs, ",", [](const std::pair<int, int>& l) {
              return std::to_string(l.first) + "-" + std::to_string(l.second);
            });
          }},
      Key{"skeleton.rest_pose",
          [](ProjectConfig& c, std::string_view v) {
            c.synth.skeleton.rest_pose.clear();
            for (const auto& item : split(v, ',')) {
              const auto xy = split(item, ':');
              if (xy.size() != 2) {
                throw ConfigError("skeleton.rest_pose: expected x:y points, got '" + item + "'");
              }
              c.synth.skeleton.rest_pose.push_back(
                  {to_double(xy[0], "skeleton.rest_pose"), to_double(xy[1], "skeleton.rest_pose")});
            }
          },
          [](const ProjectConfig& c) {
            return join(c.synth.skeleton.rest_pose, ",", [](const std::array<double, 2>& p) {
              return fmt_double(p[0]) + ":" + fmt_double(p[1]);
            });
          }},
      DPN_DOUBLE_KEY("synth.scale_min", synth.scale_min),
      DPN_DOUBLE_KEY("synth.scale_max", synth.scale_max),
      DPN_DOUBLE_KEY("synth.rotation", synth.rotation),
      DPN_DOUBLE_KEY("synth.noise", synth.noise),
      DPN_DOUBLE_KEY("synth.min_center_fraction", synth.min_center_fraction),
      DPN_DOUBLE_KEY("synth.min_gap", synth.min_gap),
      DPN_DOUBLE_KEY("targets.sigma", targets.sigma),
      DPN_DOUBLE_KEY("targets.paf_half_width", targets.paf_half_width),
      DPN_INT_KEY("train.steps", train.steps),
      DPN_INT_KEY("train.batch", train.batch),
      DPN_FLOAT_KEY("train.lr", train.learning_rate),
      DPN_FLOAT_KEY("train.momentum", train.momentum),
      DPN_INT_KEY("train.warmup_steps", train.warmup_steps),
      DPN_INT_KEY("train.log_interval", train.log_interval),
      DPN_INT_KEY("train.n_train", train.n_train),
      DPN_INT_KEY("train.n_eval", train.n_eval),
      DPN_DOUBLE_KEY("decode.peak_threshold", decode.peak_threshold),
      DPN_DOUBLE_KEY("decode.connection_threshold", decode.connection_threshold),
      DPN_INT_KEY("decode.samples", decode.samples),
      Key{"decode.scales",
          [](ProjectConfig& c, std::string_view v) {
            c.decode.scales.clear();
            for (const auto& item : split(v, ',')) {
              c.decode.scales.push_back(to_double(item, "decode.scales"));
            }
          },
          [](const ProjectConfig& c) { return join(c.decode.scales, ",", fmt_double); }},
      DPN_DOUBLE_KEY("eval.pck_alpha", decode.pck_alpha),
  };
  return table;
}

#undef DPN_INT_KEY
#undef DPN_DOUBLE_KEY
#undef DPN_FLOAT_KEY

}  // namespace

std::vector<FrontendLayer> parse_frontend(std::string_view spec) {
  std::vector<FrontendLayer> out;
  for (const auto& item : split(spec, ',')) {
    if (item == "M" || item == "m") {
      out.push_back({true, 0});
    } else {
      const int c = to_int(item, "frontend");
      if (c <= 0) throw ConfigError("frontend: conv width must be positive, got " + item);
      out.push_back({false, c});
    }
  }
  return out;
}

std::string frontend_to_string(const std::vector<FrontendLayer>& layers) {
  return join(layers, ",", [](const FrontendLayer& l) {
    return l.pool ? std::string("M") : std::to_string(l.channels);
  });
}

int NetworkConfig::stride() const {
  int s = 1;
  for (const auto& l : frontend) {
    if (l.pool) s *= 2;
  }
  return s;
}

int NetworkConfig::feature_channels() const {
  for (auto it = frontend.rbegin(); it != frontend.rend(); ++it) {
    if (!it->pool) return it->channels;
  }
  return 3;
}

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v <= 0) throw ConfigError(std::string(key) + " must be positive, got " + std::to_string(v));
  };
  positive(stages, "stages");
  positive(keypoints, "keypoints");
  positive(pafs, "pafs");
  if (pafs % 2 != 0) {
    throw ConfigError("pafs must be even (x and y per limb), got " + std::to_string(pafs));
  }
  int pools = 0;
  bool any_conv = false;
  for (const auto& l : frontend) {
    if (l.pool) {
      ++pools;
    } else {
      any_conv = true;
      positive(l.channels, "frontend");
    }
  }
  if (pools != 3) {
    throw ConfigError("frontend must contain exactly three 2x2 pools (stride 8), found " +
                      std::to_string(pools));
  }
  if (!any_conv) throw ConfigError("frontend has no conv layers");
  if (frontend.back().pool) throw ConfigError("frontend must end with a conv layer");
  if (arch == Arch::dpn) {
    positive(dpn.residual, "dpn.residual");
    positive(dpn.dense, "dpn.dense");
    positive(dpn.growth, "dpn.growth");
    positive(dpn.bottleneck, "dpn.bottleneck");
    positive(dpn.cardinality, "dpn.cardinality");
    positive(dpn.blocks_first, "dpn.blocks_first");
    positive(dpn.blocks, "dpn.blocks");
    if (dpn.bottleneck % dpn.cardinality != 0) {
      throw ConfigError("dpn.bottleneck " + std::to_string(dpn.bottleneck) +
                        " not divisible by dpn.cardinality " + std::to_string(dpn.cardinality));
    }
  } else {
    positive(baseline.width, "baseline.width");
    positive(baseline.first_hidden, "baseline.first_hidden");
    positive(baseline.first_convs, "baseline.first_convs");
    positive(baseline.later_convs, "baseline.later_convs");
    positive(baseline.later_kernel, "baseline.later_kernel");
    if (baseline.later_kernel % 2 == 0) {
      throw ConfigError("baseline.later_kernel must be odd for same padding");
    }
  }
}

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.arch = Arch::dpn;
  c.stages = 2;
  c.keypoints = 6;
  c.pafs = 8;
  c.frontend = parse_frontend("16,16,M,32,32,M,64,64,64,64,M,128,128,64,32");
  c.dpn = DpnParams{32, 16, 8, 32, 4, 1, 3};
  return c;
}

Skeleton Skeleton::stick_figure() {
  Skeleton s;
  s.keypoints = 5;
  s.limbs = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  s.rest_pose = {{0.0, -1.0}, {-0.8, -0.1}, {0.8, -0.1}, {-0.4, 1.0}, {0.4, 1.0}};
  return s;
}

void Skeleton::validate() const {
  if (keypoints <= 0) throw ConfigError("skeleton.keypoints must be positive");
  if (limbs.empty()) throw ConfigError("skeleton.limbs must not be empty");
  for (const auto& [a, b] : limbs) {
    if (a < 0 || a >= keypoints || b < 0 || b >= keypoints || a == b) {
      throw ConfigError("skeleton.limbs: invalid limb " + std::to_string(a) + "-" +
                        std::to_string(b) + " for " + std::to_string(keypoints) + " keypoints");
    }
  }
  if (static_cast<int>(rest_pose.size()) != keypoints) {
    throw ConfigError("skeleton.rest_pose: expected " + std::to_string(keypoints) +
                      " points, got " + std::to_string(rest_pose.size()));
  }
}

void SynthParams::validate() const {
  if (height <= 0 || height % 8 != 0) {
    throw ConfigError("synth.height must be a positive multiple of 8, got " + std::to_string(height));
  }
  if (width <= 0 || width % 8 != 0) {
    throw ConfigError("synth.width must be a positive multiple of 8, got " + std::to_string(width));
  }
  if (max_persons < 1) throw ConfigError("synth.max_persons must be >= 1");
  if (!(scale_min > 0.0) || scale_max < scale_min) {
    throw ConfigError("synth.scale_min/scale_max must satisfy 0 < min <= max");
  }
  if (noise < 0.0) throw ConfigError("synth.noise must be non-negative");
  skeleton.validate();
}

ProjectConfig ProjectConfig::parse(std::string_view text, std::string_view source) {
  ProjectConfig cfg;
  std::map<std::string, const Key*> index;
  for (const auto& k : keys()) index[k.name] = &k;
  std::map<std::string, int> seen;

  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(lineno) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    auto it = index.find(key);
    if (it == index.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (auto s = seen.find(key); s != seen.end()) {
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(s->second) + ")");
    }
    seen[key] = lineno;
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.synth.seed = cfg.seed;
  cfg.network.validate();
  cfg.synth.validate();
  return cfg;
}

ProjectConfig ProjectConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

float TrainParams::learning_rate_at(int step) const {
  if (step >= warmup_steps) return learning_rate;
  return learning_rate * static_cast<float>(step + 1) / static_cast<float>(warmup_steps);
}

std::string ProjectConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
  return out;
}

void ProjectConfig::validate_for_training() const {
  network.validate();
  synth.validate();
  if (network.keypoints != synth.skeleton.keypoints + 1) {
    throw ConfigError("keypoints (J) = " + std::to_string(network.keypoints) +
                      " must equal skeleton.keypoints + 1 (background) = " +
                      std::to_string(synth.skeleton.keypoints + 1));
  }
  if (network.pafs != 2 * synth.skeleton.limb_count()) {
    throw ConfigError("pafs (C) = " + std::to_string(network.pafs) +
                      " must equal 2 x skeleton limbs = " +
                      std::to_string(2 * synth.skeleton.limb_count()));
  }
  if (train.steps < 1) throw ConfigError("train.steps must be >= 1");
  if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (train.warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
  if (train.n_train < 1 || train.n_eval < 1) {
    throw ConfigError("train.n_train and train.n_eval must be >= 1");
  }
  if (targets.sigma <= 0.0) throw ConfigError("targets.sigma must be positive");
  if (targets.paf_half_width <= 0.0) throw ConfigError("targets.paf_half_width must be positive");
}

}  // namespace dpnpose
