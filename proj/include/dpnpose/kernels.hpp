#pragma once

// Data-parallel compute kernels. Every kernel writes each output element from
// exactly one thread in a fixed order, so results are bitwise reproducible
// regardless of OpenMP thread count. The serial versions in reference.hpp
// are the test oracles for these.

#include <cstdint>
#include <span>

#include "dpnpose/tensor.hpp"

namespace dpnpose {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  int out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }

  // Throws ShapeError naming the offending dimension.
  void validate() const;
};

// "Same" padding for an odd kernel; rejects even kernels.
int same_padding(int kernel);

namespace kernels {

// C[M,N] (+)= A[M,K] * B[K,N], all row-major with the given leading dims.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate);
// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc);
// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

// Accumulates into whichever of grad_input / grad_weight / grad_bias is non-empty.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> y);
template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> grad_y, std::span<T> grad_x);

// 2x2 window, stride 2. argmax receives the flat input index of each maximum;
// ties resolve to the first element in window scan order.
template <typename T>
void max_pool2x2_forward(int planes, int h, int w, std::span<const T> x, std::span<T> y,
                         std::span<std::int32_t> argmax);
template <typename T>
void max_pool2x2_backward(std::span<const std::int32_t> argmax, std::span<const T> grad_y,
                          std::span<T> grad_x);

}  // namespace kernels

/// Bilinear resampling of an NCHW tensor. Output pixel (y, x) samples the
/// source at (y * scale_y, x * scale_x) with edge clamping. Origin-aligned,
/// no half-pixel shift, matching the target rendering convention.
template <typename T>
BasicTensor<T> resample_bilinear(const BasicTensor<T>& src, int out_h, int out_w, double scale_y,
                                 double scale_x);

/// Resize to (out_h, out_w) with scale = in/out on each axis. Not differentiable.
template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& src, int out_h, int out_w);

}  // namespace dpnpose
