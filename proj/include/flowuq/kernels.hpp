#pragma once

#include <cstddef>
#include <span>

// Dense and convolution kernels behind the differentiation layer.
//
// `serial` holds the straightforward reference loops; `parallel` holds the
// OpenMP versions used by the graph ops. Each output element is produced by
// exactly one thread with the same accumulation order as the reference, so
// results do not depend on the thread count.

namespace flowuq::kernels {

struct ConvDims {
  std::size_t batch, ch_in, height, width;
  std::size_t ch_out, k_h, k_w;
  std::size_t out_h() const { return height - k_h + 1; }
  std::size_t out_w() const { return width - k_w + 1; }
  std::size_t input_size() const { return batch * ch_in * height * width; }
  std::size_t kernel_size() const { return ch_out * ch_in * k_h * k_w; }
  std::size_t output_size() const { return batch * ch_out * out_h() * out_w(); }
};

#define FLOWUQ_KERNEL_DECLS                                                                    \
  /* c[n,m] = a[n,k] * b[k,m] */                                                               \
  void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,        \
            std::size_t n, std::size_t k, std::size_t m);                                      \
  /* out[k,m] = a[n,k]^T * g[n,m] */                                                           \
  void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> out,   \
               std::size_t n, std::size_t k, std::size_t m);                                   \
  /* out[n,k] = g[n,m] * b[k,m]^T */                                                           \
  void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> out,   \
               std::size_t n, std::size_t k, std::size_t m);                                   \
  /* valid, stride-1 cross-correlation */                                                      \
  void conv2d_forward(std::span<const double> x, std::span<const double> w,                   \
                      std::span<double> y, const ConvDims& d);                                 \
  void conv2d_backward_input(std::span<const double> gy, std::span<const double> w,           \
                             std::span<double> gx, const ConvDims& d);                         \
  void conv2d_backward_kernel(std::span<const double> x, std::span<const double> gy,          \
                              std::span<double> gw, const ConvDims& d);

namespace serial {
FLOWUQ_KERNEL_DECLS
}  // namespace serial

namespace parallel {
FLOWUQ_KERNEL_DECLS
}  // namespace parallel

#undef FLOWUQ_KERNEL_DECLS

}  // namespace flowuq::kernels
