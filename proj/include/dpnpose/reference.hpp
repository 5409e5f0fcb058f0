#pragma once

// Serial, loop-nest reference implementations. Slow and obvious on purpose:
// they are the oracles the parallel kernels are tested and benchmarked against.

#include <cstdint>
#include <span>

#include "dpnpose/kernels.hpp"

namespace dpnpose::reference {

// Direct sliding-window cross-correlation, one output element at a time.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void max_pool2x2_forward(int planes, int h, int w, std::span<const T> x, std::span<T> y);

template <typename T>
double sse(std::span<const T> pred, std::span<const T> target);

}  // namespace dpnpose::reference
