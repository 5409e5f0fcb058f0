#include "dpnpose/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dpnpose {

void ConvGeometry::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ShapeError(std::string("conv2d: ") + name + " must be positive, got " + std::to_string(v));
  };
  positive(batch, "batch");
  positive(in_channels, "input channels");
  positive(in_h, "input height");
  positive(in_w, "input width");
  positive(out_channels, "output channels");
  positive(kernel_h, "kernel height");
  positive(kernel_w, "kernel width");
  positive(stride, "stride");
  positive(groups, "groups");
  if (padding < 0) throw ShapeError("conv2d: padding must be non-negative");
  if (in_channels % groups != 0) {
    throw ShapeError("conv2d: input channels " + std::to_string(in_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (out_channels % groups != 0) {
    throw ShapeError("conv2d: output channels " + std::to_string(out_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (out_h() <= 0) throw ShapeError("conv2d: kernel height exceeds padded input height");
  if (out_w() <= 0) throw ShapeError("conv2d: kernel width exceeds padded input width");
}

int same_padding(int kernel) {
  if (kernel <= 0 || kernel % 2 == 0) {
    throw ShapeError("same padding needs an odd kernel size, got " + std::to_string(kernel));
  }
  return (kernel - 1) / 2;
}

namespace kernels {

namespace {

constexpr int kColBlock = 256;

template <typename T>
void im2col(const T* in, int channels, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* col) {
  const int rows = channels * kh * kw;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int kx = r % kw;
    const int ky = (r / kw) % kh;
    const int c = r / (kw * kh);
    const T* plane = in + static_cast<std::size_t>(c) * h * w;
    T* dst = col + static_cast<std::size_t>(r) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * stride - pad + ky;
      T* drow = dst + static_cast<std::size_t>(y) * ow;
      if (iy < 0 || iy >= h) {
        std::fill(drow, drow + ow, T(0));
        continue;
      }
      const T* srow = plane + static_cast<std::size_t>(iy) * w;
      for (int x = 0; x < ow; ++x) {
        const int ix = x * stride - pad + kx;
        drow[x] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
      }
    }
  }
}

// Accumulates columns back into the image. Parallel over channels: each
// channel plane is owned by one thread.
template <typename T>
void col2im(const T* col, int channels, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, T* in) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* plane = in + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const int r = (c * kh + ky) * kw + kx;
        const T* src = col + static_cast<std::size_t>(r) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* irow = plane + static_cast<std::size_t>(iy) * w;
          const T* srow = src + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * stride - pad + kx;
            if (ix >= 0 && ix < w) irow[ix] += srow[x];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  const int row_blocks = (m + 3) / 4;
#pragma omp parallel for schedule(static)
  for (int rb = 0; rb < row_blocks; ++rb) {
    const int i0 = rb * 4;
    const int rows = std::min(4, m - i0);
    for (int j0 = 0; j0 < n; j0 += kColBlock) {
      const int cols = std::min(kColBlock, n - j0);
      T* c0 = c + static_cast<std::size_t>(i0) * ldc + j0;
      if (!accumulate) {
        for (int r = 0; r < rows; ++r) std::fill(c0 + r * ldc, c0 + r * ldc + cols, T(0));
      }
      if (rows == 4) {
        T* c1 = c0 + ldc;
        T* c2 = c1 + ldc;
        T* c3 = c2 + ldc;
        const T* a0 = a + static_cast<std::size_t>(i0) * lda;
        for (int p = 0; p < k; ++p) {
          const T v0 = a0[p];
          const T v1 = a0[lda + p];
          const T v2 = a0[2 * lda + p];
          const T v3 = a0[3 * lda + p];
          const T* brow = b + static_cast<std::size_t>(p) * ldb + j0;
#pragma omp simd
          for (int j = 0; j < cols; ++j) {
            const T bv = brow[j];
            c0[j] += v0 * bv;
            c1[j] += v1 * bv;
            c2[j] += v2 * bv;
            c3[j] += v3 * bv;
          }
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          T* cr = c0 + static_cast<std::size_t>(r) * ldc;
          const T* ar = a + static_cast<std::size_t>(i0 + r) * lda;
          for (int p = 0; p < k; ++p) {
            const T v = ar[p];
            const T* brow = b + static_cast<std::size_t>(p) * ldb + j0;
#pragma omp simd
            for (int j = 0; j < cols; ++j) cr[j] += v * brow[j];
          }
        }
      }
    }
  }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<std::size_t>(i) * lda;
    T* cr = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const T* br = b + static_cast<std::size_t>(j) * ldb;
      T acc = T(0);
#pragma omp simd reduction(+ : acc)
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      cr[j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    T* cr = c + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill(cr, cr + n, T(0));
    for (int p = 0; p < k; ++p) {
      const T v = a[static_cast<std::size_t>(p) * lda + i];
      if (v == T(0)) continue;
      const T* br = b + static_cast<std::size_t>(p) * ldb;
#pragma omp simd
      for (int j = 0; j < n; ++j) cr[j] += v * br[j];
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int pix = oh * ow;
  const int cin_g = g.in_per_group();
  const int cout_g = g.out_per_group();
  const int kdim = cin_g * g.kernel_h * g.kernel_w;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * pix);

  for (int n = 0; n < g.batch; ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      const T* in = input.data() +
                    (static_cast<std::size_t>(n) * g.in_channels + grp * cin_g) * g.in_h * g.in_w;
      const T* w = weight.data() + static_cast<std::size_t>(grp) * cout_g * kdim;
      T* out = output.data() + (static_cast<std::size_t>(n) * g.out_channels + grp * cout_g) * pix;
      const T* src = in;
      if (!pointwise) {
        im2col(in, cin_g, g.in_h, g.in_w, g.kernel_h, g.kernel_w, g.stride, g.padding, oh, ow,
               col.data());
        src = col.data();
      }
      gemm_nn(cout_g, pix, kdim, w, kdim, src, pix, out, pix, false);
      if (!bias.empty()) {
#pragma omp parallel for schedule(static)
        for (int o = 0; o < cout_g; ++o) {
          const T bv = bias[grp * cout_g + o];
          T* orow = out + static_cast<std::size_t>(o) * pix;
          for (int p = 0; p < pix; ++p) orow[p] += bv;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_output, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int pix = oh * ow;
  const int cin_g = g.in_per_group();
  const int cout_g = g.out_per_group();
  const int kdim = cin_g * g.kernel_h * g.kernel_w;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * pix);

  for (int n = 0; n < g.batch; ++n) {
    for (int grp = 0; grp < g.groups; ++grp) {
      const std::size_t in_off =
          (static_cast<std::size_t>(n) * g.in_channels + grp * cin_g) * g.in_h * g.in_w;
      const std::size_t out_off =
          (static_cast<std::size_t>(n) * g.out_channels + grp * cout_g) * pix;
      const T* gout = grad_output.data() + out_off;
      const std::size_t w_off = static_cast<std::size_t>(grp) * cout_g * kdim;

      if (!grad_bias.empty()) {
        for (int o = 0; o < cout_g; ++o) {
          const T* row = gout + static_cast<std::size_t>(o) * pix;
          T acc = T(0);
          for (int p = 0; p < pix; ++p) acc += row[p];
          grad_bias[grp * cout_g + o] += acc;
        }
      }
      if (!grad_weight.empty()) {
        const T* src = input.data() + in_off;
        if (!pointwise) {
          im2col(src, cin_g, g.in_h, g.in_w, g.kernel_h, g.kernel_w, g.stride, g.padding, oh, ow,
                 col.data());
          src = col.data();
        }
        gemm_nt(cout_g, kdim, pix, gout, pix, src, pix, grad_weight.data() + w_off, kdim);
      }
      if (!grad_input.empty()) {
        T* gin = grad_input.data() + in_off;
        if (pointwise) {
          gemm_tn(kdim, pix, cout_g, weight.data() + w_off, kdim, gout, pix, gin, pix, true);
        } else {
          gemm_tn(kdim, pix, cout_g, weight.data() + w_off, kdim, gout, pix, col.data(), pix,
                  false);
          col2im(col.data(), cin_g, g.in_h, g.in_w, g.kernel_h, g.kernel_w, g.stride, g.padding,
                 oh, ow, gin);
        }
      }
    }
  }
}

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> y) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> grad_y, std::span<T> grad_x) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) grad_x[i] += grad_y[i];
  }
}

template <typename T>
void max_pool2x2_forward(int planes, int h, int w, std::span<const T> x, std::span<T> y,
                         std::span<std::int32_t> argmax) {
  const int oh = h / 2;
  const int ow = w / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const std::size_t in_base = static_cast<std::size_t>(p) * h * w;
    const std::size_t out_base = static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::size_t best = in_base + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        T best_v = x[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_base + static_cast<std::size_t>(2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = out_base + static_cast<std::size_t>(oy) * ow + ox;
        y[o] = best_v;
        argmax[o] = static_cast<std::int32_t>(best);
      }
    }
  }
}

template <typename T>
void max_pool2x2_backward(std::span<const std::int32_t> argmax, std::span<const T> grad_y,
                          std::span<T> grad_x) {
  // Windows do not overlap, so each input element has at most one writer.
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(grad_y.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) grad_x[argmax[i]] += grad_y[i];
}

#define DPNPOSE_INSTANTIATE_KERNELS(T)                                                          \
  template void gemm_nn<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);         \
  template void gemm_nt<T>(int, int, int, const T*, int, const T*, int, T*, int);               \
  template void gemm_tn<T>(int, int, int, const T*, int, const T*, int, T*, int, bool);         \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv2d_backward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                   std::span<const T>, std::span<T>, std::span<T>,              \
                                   std::span<T>);                                               \
  template void relu_forward<T>(std::span<const T>, std::span<T>);                              \
  template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);         \
  template void max_pool2x2_forward<T>(int, int, int, std::span<const T>, std::span<T>,         \
                                       std::span<std::int32_t>);                                \
  template void max_pool2x2_backward<T>(std::span<const std::int32_t>, std::span<const T>,      \
                                        std::span<T>);

DPNPOSE_INSTANTIATE_KERNELS(float)
DPNPOSE_INSTANTIATE_KERNELS(double)

}  // namespace kernels

template <typename T>
BasicTensor<T> resample_bilinear(const BasicTensor<T>& src, int out_h, int out_w, double scale_y,
                                 double scale_x) {
  if (src.rank() != 4) throw ShapeError("bilinear resize: input must be rank 4, got " + shape_str(src.shape()));
  if (out_h <= 0) throw ShapeError("bilinear resize: target height must be positive");
  if (out_w <= 0) throw ShapeError("bilinear resize: target width must be positive");
  const int n = src.dim(0);
  const int c = src.dim(1);
  const int h = src.dim(2);
  const int w = src.dim(3);
  BasicTensor<T> out({n, c, out_h, out_w});

  struct Tap {
    int i0, i1;
    T frac;
  };
  auto taps = [](int count, int limit, double scale) {
    std::vector<Tap> t(count);
    for (int i = 0; i < count; ++i) {
      const double pos = std::clamp(i * scale, 0.0, static_cast<double>(limit - 1));
      const int i0 = static_cast<int>(std::floor(pos));
      const int i1 = std::min(i0 + 1, limit - 1);
      t[i] = {i0, i1, static_cast<T>(pos - i0)};
    }
    return t;
  };
  const auto ty = taps(out_h, h, scale_y);
  const auto tx = taps(out_w, w, scale_x);

  const int planes = n * c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const T* s = src.ptr() + static_cast<std::size_t>(p) * h * w;
    T* d = out.ptr() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const T* r0 = s + static_cast<std::size_t>(ty[y].i0) * w;
      const T* r1 = s + static_cast<std::size_t>(ty[y].i1) * w;
      for (int x = 0; x < out_w; ++x) {
        const Tap& t = tx[x];
        // lerp form a + f(b - a) keeps constant maps exact.
        const T top = r0[t.i0] + t.frac * (r0[t.i1] - r0[t.i0]);
        const T bot = r1[t.i0] + t.frac * (r1[t.i1] - r1[t.i0]);
        d[static_cast<std::size_t>(y) * out_w + x] = top + ty[y].frac * (bot - top);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& src, int out_h, int out_w) {
  if (src.rank() != 4) throw ShapeError("bilinear resize: input must be rank 4, got " + shape_str(src.shape()));
  if (out_h <= 0) throw ShapeError("bilinear resize: target height must be positive");
  if (out_w <= 0) throw ShapeError("bilinear resize: target width must be positive");
  return resample_bilinear(src, out_h, out_w, static_cast<double>(src.dim(2)) / out_h,
                           static_cast<double>(src.dim(3)) / out_w);
}

template BasicTensor<float> resample_bilinear(const BasicTensor<float>&, int, int, double, double);
template BasicTensor<double> resample_bilinear(const BasicTensor<double>&, int, int, double, double);
template BasicTensor<float> bilinear_resize(const BasicTensor<float>&, int, int);
template BasicTensor<double> bilinear_resize(const BasicTensor<double>&, int, int);

}  // namespace dpnpose
