#include "flowuq/kernels.hpp"

namespace flowuq::kernels::serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * m + j];
      c[i * m + j] = acc;
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> out,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += a[i * k + p] * g[i * m + j];
      out[p * m + j] = acc;
    }
  }
}

void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> out,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * b[p * m + j];
      out[i * k + p] = acc;
    }
  }
}

void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.ch_out; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d.ch_in; ++c)
            for (std::size_t i = 0; i < d.k_h; ++i)
              for (std::size_t j = 0; j < d.k_w; ++j)
                acc += x[((b * d.ch_in + c) * d.height + r + i) * d.width + s + j] *
                       w[((o * d.ch_in + c) * d.k_h + i) * d.k_w + j];
          y[((b * d.ch_out + o) * oh + r) * ow + s] = acc;
        }
}

void conv2d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t c = 0; c < d.ch_in; ++c)
      for (std::size_t h = 0; h < d.height; ++h)
        for (std::size_t v = 0; v < d.width; ++v) {
          double acc = 0.0;
          for (std::size_t o = 0; o < d.ch_out; ++o)
            for (std::size_t i = 0; i < d.k_h; ++i) {
              if (h < i || h - i >= oh) continue;
              for (std::size_t j = 0; j < d.k_w; ++j) {
                if (v < j || v - j >= ow) continue;
                acc += gy[((b * d.ch_out + o) * oh + h - i) * ow + v - j] *
                       w[((o * d.ch_in + c) * d.k_h + i) * d.k_w + j];
              }
            }
          gx[((b * d.ch_in + c) * d.height + h) * d.width + v] = acc;
        }
}

void conv2d_backward_kernel(std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  for (std::size_t o = 0; o < d.ch_out; ++o)
    for (std::size_t c = 0; c < d.ch_in; ++c)
      for (std::size_t i = 0; i < d.k_h; ++i)
        for (std::size_t j = 0; j < d.k_w; ++j) {
          double acc = 0.0;
          for (std::size_t b = 0; b < d.batch; ++b)
            for (std::size_t r = 0; r < oh; ++r)
              for (std::size_t s = 0; s < ow; ++s)
                acc += gy[((b * d.ch_out + o) * oh + r) * ow + s] *
                       x[((b * d.ch_in + c) * d.height + r + i) * d.width + s + j];
          gw[((o * d.ch_in + c) * d.k_h + i) * d.k_w + j] = acc;
        }
}

}  // namespace flowuq::kernels::serial
