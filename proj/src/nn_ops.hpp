#pragma once

// Small dense kernels shared by the generator and the discriminator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace skinforge::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// 3x3 convolution, zero padding, CHW layout.
inline void conv3x3(std::span<const double> in, int in_ch, int res, std::span<const float> weight,
                    std::span<const float> bias, int out_ch, std::span<double> out) {
  const int area = res * res;
  for (int o = 0; o < out_ch; ++o) {
    double* dst = out.data() + static_cast<std::size_t>(o) * area;
    std::fill(dst, dst + area, static_cast<double>(bias[o]));
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in.data() + static_cast<std::size_t>(i) * area;
      const float* k = weight.data() + (static_cast<std::size_t>(o) * in_ch + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double kv = k[ky * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(res, res - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(res, res - dx);
          for (int y = y0; y < y1; ++y) {
            const double* srow = src + (y + dy) * res + dx;
            double* drow = dst + y * res;
            for (int x = x0; x < x1; ++x) drow[x] += kv * srow[x];
          }
        }
      }
    }
  }
}

// Adjoint of conv3x3. Either output span may be empty to skip that term.
inline void conv3x3_backward(std::span<const double> in, int in_ch, int res, std::span<const float> weight, int out_ch,
                             std::span<const double> d_out, std::span<double> d_in, std::span<double> d_weight,
                             std::span<double> d_bias) {
  const int area = res * res;
  for (int o = 0; o < out_ch; ++o) {
    const double* g = d_out.data() + static_cast<std::size_t>(o) * area;
    if (!d_bias.empty()) {
      double sum = 0.0;
      for (int p = 0; p < area; ++p) sum += g[p];
      d_bias[o] += sum;
    }
    for (int i = 0; i < in_ch; ++i) {
      const double* src = in.data() + static_cast<std::size_t>(i) * area;
      const std::size_t kbase = (static_cast<std::size_t>(o) * in_ch + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = std::max(0, -dy), y1 = std::min(res, res - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(res, res - dx);
          const double kv = weight[kbase + ky * 3 + kx];
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + y * res;
            const int sy = (y + dy) * res + dx;
            for (int x = x0; x < x1; ++x) {
              acc += grow[x] * src[sy + x];
              if (!d_in.empty()) d_in[static_cast<std::size_t>(i) * area + sy + x] += kv * grow[x];
            }
          }
          if (!d_weight.empty()) d_weight[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

}  // namespace skinforge::nn
