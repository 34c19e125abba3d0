#include "flowuq/kernels.hpp"

#include <cstdint>

namespace flowuq::kernels::parallel {

namespace {
// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;
}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> out,
             std::size_t n, std::size_t k, std::size_t m) {
  const auto cols = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::int64_t pp = 0; pp < cols; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* orow = out.data() + p * m;
    for (std::size_t j = 0; j < m; ++j) orow[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double aip = a[i * k + p];
      const double* grow = g.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * grow[j];
    }
  }
}

void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> out,
             std::size_t n, std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* grow = g.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b.data() + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
      out[i * k + p] = acc;
    }
  }
}

void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<double> y,
                    const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  const auto planes = static_cast<std::int64_t>(d.batch * d.ch_out);
#pragma omp parallel for schedule(static) if (d.output_size() * d.ch_in * d.k_h * d.k_w > kParallelWork)
  for (std::int64_t q = 0; q < planes; ++q) {
    const std::size_t b = static_cast<std::size_t>(q) / d.ch_out;
    const std::size_t o = static_cast<std::size_t>(q) % d.ch_out;
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t s = 0; s < ow; ++s) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d.ch_in; ++c) {
          const double* xp = x.data() + ((b * d.ch_in + c) * d.height + r) * d.width + s;
          const double* wp = w.data() + (o * d.ch_in + c) * d.k_h * d.k_w;
          for (std::size_t i = 0; i < d.k_h; ++i)
            for (std::size_t j = 0; j < d.k_w; ++j) acc += xp[i * d.width + j] * wp[i * d.k_w + j];
        }
        y[((b * d.ch_out + o) * oh + r) * ow + s] = acc;
      }
  }
}

void conv2d_backward_input(std::span<const double> gy, std::span<const double> w,
                           std::span<double> gx, const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  const auto planes = static_cast<std::int64_t>(d.batch * d.ch_in);
#pragma omp parallel for schedule(static) if (d.output_size() * d.ch_in * d.k_h * d.k_w > kParallelWork)
  for (std::int64_t q = 0; q < planes; ++q) {
    const std::size_t b = static_cast<std::size_t>(q) / d.ch_in;
    const std::size_t c = static_cast<std::size_t>(q) % d.ch_in;
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
}

void conv2d_backward_kernel(std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, const ConvDims& d) {
  const std::size_t oh = d.out_h(), ow = d.out_w();
  const auto pairs = static_cast<std::int64_t>(d.ch_out * d.ch_in);
#pragma omp parallel for schedule(static) if (d.output_size() * d.ch_in * d.k_h * d.k_w > kParallelWork)
  for (std::int64_t q = 0; q < pairs; ++q) {
    const std::size_t o = static_cast<std::size_t>(q) / d.ch_in;
    const std::size_t c = static_cast<std::size_t>(q) % d.ch_in;
    for (std::size_t i = 0; i < d.k_h; ++i)
      for (std::size_t j = 0; j < d.k_w; ++j) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d.batch; ++b)
          for (std::size_t r = 0; r < oh; ++r) {
            const double* gp = gy.data() + ((b * d.ch_out + o) * oh + r) * ow;
            const double* xp = x.data() + ((b * d.ch_in + c) * d.height + r + i) * d.width + j;
            for (std::size_t s = 0; s < ow; ++s) acc += gp[s] * xp[s];
          }
        gw[((o * d.ch_in + c) * d.k_h + i) * d.k_w + j] = acc;
      }
  }
}

}  // namespace flowuq::kernels::parallel
