#include "dpnpose/reference.hpp"

#include <limits>

namespace dpnpose::reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int cin_g = g.in_per_group();
  const int cout_g = g.out_per_group();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      const int grp = o / cout_g;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          T acc = bias.empty() ? T(0) : bias[o];
          for (int ci = 0; ci < cin_g; ++ci) {
            const int c = grp * cin_g + ci;
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.padding + ky;
                const int ix = x * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const T v = input[((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
                const T wv = weight[((static_cast<std::size_t>(o) * cin_g + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                acc += v * wv;
              }
            }
          }
          output[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + y) * ow + x] = acc;
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
  const int cin_g = g.in_per_group();
  const int cout_g = g.out_per_group();
  for (int n = 0; n < g.batch; ++n) {
    for (int o = 0; o < g.out_channels; ++o) {
      const int grp = o / cout_g;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const T go = grad_output[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + y) * ow + x];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (int ci = 0; ci < cin_g; ++ci) {
            const int c = grp * cin_g + ci;
            for (int ky = 0; ky < g.kernel_h; ++ky) {
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.padding + ky;
                const int ix = x * g.stride - g.padding + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const std::size_t ii = ((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + iy) * g.in_w + ix;
                const std::size_t wi = ((static_cast<std::size_t>(o) * cin_g + ci) * g.kernel_h + ky) * g.kernel_w + kx;
                if (!grad_weight.empty()) grad_weight[wi] += go * input[ii];
                if (!grad_input.empty()) grad_input[ii] += go * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void max_pool2x2_forward(int planes, int h, int w, std::span<const T> x, std::span<T> y) {
  const int oh = h / 2;
  const int ow = w / 2;
  for (int p = 0; p < planes; ++p) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const T v = x[(static_cast<std::size_t>(p) * h + 2 * oy + dy) * w + 2 * ox + dx];
            if (v > best) best = v;
          }
        }
        y[(static_cast<std::size_t>(p) * oh + oy) * ow + ox] = best;
      }
    }
  }
}

template <typename T>
double sse(std::span<const T> pred, std::span<const T> target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc;
}

template void conv2d_forward<float>(const ConvGeometry&, std::span<const float>, std::span<const float>, std::span<const float>, std::span<float>);
template void conv2d_forward<double>(const ConvGeometry&, std::span<const double>, std::span<const double>, std::span<const double>, std::span<double>);
template void conv2d_backward<float>(const ConvGeometry&, std::span<const float>, std::span<const float>, std::span<const float>, std::span<float>, std::span<float>, std::span<float>);
template void conv2d_backward<double>(const ConvGeometry&, std::span<const double>, std::span<const double>, std::span<const double>, std::span<double>, std::span<double>, std::span<double>);
template void max_pool2x2_forward<float>(int, int, int, std::span<const float>, std::span<float>);
template void max_pool2x2_forward<double>(int, int, int, std::span<const double>, std::span<double>);
template double sse<float>(std::span<const float>, std::span<const float>);
template double sse<double>(std::span<const double>, std::span<const double>);

}  // namespace dpnpose::reference
