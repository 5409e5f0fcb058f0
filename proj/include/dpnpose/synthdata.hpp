#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/targets.hpp"
#include "dpnpose/tensor.hpp"

namespace dpnpose {

struct Scene {
  Tensor image;  // [3, H, W], values in [0, 1]
  SceneAnnotation annotation;
};

/// Deterministic in (params.seed, index). Person layout draws from
/// SplitMix64(seed, 2*index) and pixel noise from SplitMix64(seed, 2*index+1).
/// Persons are stick figures: anti-aliased gray limb segments plus keypoint
/// dots whose color encodes the keypoint type, scaled by a per-person intensity.
Scene generate_scene(const SynthParams& params, std::uint64_t index);

struct Split {
  std::uint64_t train_begin = 0;
  std::uint64_t train_end = 0;  // exclusive
  std::uint64_t eval_begin = 0;
  std::uint64_t eval_end = 0;

  std::uint64_t train_index(std::uint64_t i) const { return train_begin + i % (train_end - train_begin); }
  std::uint64_t eval_index(std::uint64_t i) const { return eval_begin + i; }
};

// Training uses [0, n_train), evaluation [n_train, n_train + n_eval).
Split make_split(int n_train, int n_eval);

// [N, 3, H, W] from N scenes of equal size.
Tensor stack_images(std::span<const Scene> scenes);
// Adds a leading batch axis of one.
Tensor as_batch(const Tensor& chw);

void write_ppm(const std::filesystem::path& path, const Tensor& chw);
void write_pgm(const std::filesystem::path& path, const Tensor& hw);
// Binary P6 only. Returns [3, H, W] in [0, 1].
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace dpnpose
