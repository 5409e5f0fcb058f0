#include "dpnpose/train.hpp"

#include <array>
#include <cmath>
#include <ostream>

namespace dpnpose {

template <typename T>
StageLossVars<T> stage_losses(Graph<T>& g, const StageVars<T>& out,
                              typename Graph<T>::Var target_heatmaps,
                              typename Graph<T>::Var target_pafs) {
  return {g.sse(out.heatmaps, target_heatmaps), g.sse(out.pafs, target_pafs)};
}

template <typename T>
typename Graph<T>::Var total_loss(Graph<T>& g, std::span<const StageVars<T>> outputs,
                                  typename Graph<T>::Var target_heatmaps,
                                  typename Graph<T>::Var target_pafs) {
  if (outputs.empty()) throw std::invalid_argument("total_loss: no stage outputs");
  typename Graph<T>::Var total;
  for (const auto& out : outputs) {
    const auto l = stage_losses(g, out, target_heatmaps, target_pafs);
    const auto stage = g.add(l.heatmaps, l.pafs);
    total = total.valid() ? g.add(total, stage) : stage;
  }
  return total;
}

template StageLossVars<float> stage_losses<float>(Graph<float>&, const StageVars<float>&, Graph<float>::Var, Graph<float>::Var);
template StageLossVars<double> stage_losses<double>(Graph<double>&, const StageVars<double>&, Graph<double>::Var, Graph<double>::Var);
template Graph<float>::Var total_loss<float>(Graph<float>&, std::span<const StageVars<float>>, Graph<float>::Var, Graph<float>::Var);
template Graph<double>::Var total_loss<double>(Graph<double>&, std::span<const StageVars<double>>, Graph<double>::Var, Graph<double>::Var);

StageLossValues stage_losses(const StageOutput& out, const TargetMaps& targets) {
  Graph<float> g(GraphOptions{.enable_grad = false});
  StageVars<float> vars{g.constant(out.heatmaps), g.constant(out.pafs)};
  const auto l = stage_losses(g, vars, g.constant(targets.heatmaps), g.constant(targets.pafs));
  return {g.value(l.heatmaps).item(), g.value(l.pafs).item()};
}

Tensor stack_maps(std::span<const Tensor> maps) {
  if (maps.empty()) throw ShapeError("stack_maps: no maps");
  const Shape& s0 = maps.front().shape();
  if (s0.size() != 3) throw ShapeError("stack_maps: expected [C,h,w] maps, got " + shape_str(s0));
  Tensor out({static_cast<int>(maps.size()), s0[0], s0[1], s0[2]});
  const std::size_t chunk = maps.front().size();
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].shape() != s0) {
      throw ShapeError("stack_maps: map " + std::to_string(i) + " has shape " +
                       shape_str(maps[i].shape()) + ", expected " + shape_str(s0));
    }
    std::copy_n(maps[i].ptr(), chunk, out.ptr() + i * chunk);
  }
  return out;
}

void write_loss_header(std::ostream& os, int stages) {
  os << "step\ttotal";
  for (int t = 1; t <= stages; ++t) os << "\tf_S" << t;
  for (int t = 1; t <= stages; ++t) os << "\tf_L" << t;
  os << '\n';
}

void write_loss_record(std::ostream& os, const LossRecord& r) {
  os << r.step << '\t' << r.total;
  for (double v : r.heatmaps) os << '\t' << v;
  for (double v : r.pafs) os << '\t' << v;
  os << '\n';
}

Trainer::Trainer(ProjectConfig config) : config_(std::move(config)) {
  config_.validate_for_training();
  network_ = std::make_unique<PoseNetwork>(config_.network, config_.seed);
  optimizer_.learning_rate = config_.train.learning_rate;
  optimizer_.momentum = config_.train.momentum;
  if (config_.network.freeze_frontend) {
    for (const Parameter* p : network_->frontend_parameters()) optimizer_.frozen.insert(p->name);
  }
  split_ = make_split(config_.train.n_train, config_.train.n_eval);
  cache_features_ = config_.network.freeze_frontend;
}

const Trainer::Sample& Trainer::sample(std::uint64_t index) {
  if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  Scene scene = generate_scene(config_.synth, index);
  Sample s;
  s.targets = render_targets(scene.annotation, config_.network.stride(), config_.targets);
  if (cache_features_) {
    s.input = network_->compute_features(as_batch(scene.image));
  } else {
    s.input = as_batch(scene.image);
  }
  if (!cache_features_) cache_.clear();
  return cache_.emplace(index, std::move(s)).first->second;
}

LossRecord Trainer::step() {
  const int batch = config_.train.batch;
  std::vector<Tensor> inputs;
  std::vector<Tensor> heat;
  std::vector<Tensor> paf;
  for (int b = 0; b < batch; ++b) {
    const Sample& s = sample(split_.train_index(static_cast<std::uint64_t>(steps_done_) * batch + b));
    Tensor in = s.input;
    in = Tensor(Shape(in.shape().begin() + 1, in.shape().end()),
                std::vector<float>(in.data().begin(), in.data().end()));
    inputs.push_back(std::move(in));
    heat.push_back(s.targets.heatmaps);
    paf.push_back(s.targets.pafs);
  }

  Graph<float> g;
  const auto x = g.constant(stack_maps(inputs));
  const auto outs = cache_features_ ? network_->run_stages(g, x) : network_->forward(g, x);
  const auto th = g.constant(stack_maps(heat));
  const auto tp = g.constant(stack_maps(paf));

  LossRecord rec;
  rec.step = steps_done_ + 1;
  Graph<float>::Var total;
  for (const auto& out : outs) {
    const auto l = stage_losses(g, out, th, tp);
    rec.heatmaps.push_back(g.value(l.heatmaps).item());
    rec.pafs.push_back(g.value(l.pafs).item());
    const auto stage = g.add(l.heatmaps, l.pafs);
    total = total.valid() ? g.add(total, stage) : stage;
  }
  rec.total = g.value(total).item();
  if (!std::isfinite(rec.total)) {
    throw TrainingDiverged("training diverged: loss is " + std::to_string(rec.total) +
                           " at step " + std::to_string(rec.step));
  }
  g.backward(total);
  optimizer_.learning_rate = config_.train.learning_rate_at(steps_done_);
  auto params = network_->parameters().all();
  sgd_step(optimizer_, params);
  ++steps_done_;
  return rec;
}

std::vector<LossRecord> Trainer::run(std::ostream* log) {
  const int stages = config_.network.stages;
  const int interval = std::max(1, config_.train.log_interval);
  std::vector<LossRecord> rows;
  if (log != nullptr) write_loss_header(*log, stages);
  LossRecord acc;
  int in_interval = 0;
  auto flush = [&]() {
    if (in_interval == 0) return;
    LossRecord r;
    r.step = steps_done_;
    r.total = acc.total / in_interval;
    for (double v : acc.heatmaps) r.heatmaps.push_back(v / in_interval);
    for (double v : acc.pafs) r.pafs.push_back(v / in_interval);
    if (log != nullptr) {
      write_loss_record(*log, r);
      log->flush();
    }
    rows.push_back(std::move(r));
    acc = LossRecord{};
    in_interval = 0;
  };
  while (steps_done_ < config_.train.steps) {
    const LossRecord r = step();
    if (in_interval == 0) {
      acc.heatmaps.assign(stages, 0.0);
      acc.pafs.assign(stages, 0.0);
    }
    acc.total += r.total;
    for (int t = 0; t < stages; ++t) {
      acc.heatmaps[t] += r.heatmaps[t];
      acc.pafs[t] += r.pafs[t];
    }
    ++in_interval;
    if (steps_done_ % interval == 0) flush();
  }
  flush();
  return rows;
}

}  // namespace dpnpose
