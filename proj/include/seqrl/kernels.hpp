#pragma once

#include <cstddef>
#include <cstdint>

// Dense numeric kernels behind the differentiable ops.
//
// Two implementations share one contract: `serial` is the straightforward
// loop nest kept as the reference, `parallel` splits the outermost
// independent loop across OpenMP threads. Every output element is reduced in
// the same order in both, so results are bit-identical regardless of thread
// count or batch size. All arrays are row-major and caller-allocated.

namespace seqrl::kernels {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t filters, kernel_h, kernel_w;
  std::size_t stride, padding;

  std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
};

struct AttentionGeometry {
  std::size_t batch, length, width, heads;

  std::size_t head_width() const { return width / heads; }
};

#define SEQRL_KERNEL_SET                                                                                         \
  /* C (+)= A[m x k] . B[k x n] */                                                                               \
  void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,            \
            bool accumulate);                                                                                    \
  /* C (+)= A[m x k] . B[n x k]^T */                                                                             \
  void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,         \
               bool accumulate);                                                                                 \
  /* C (+)= A[k x m]^T . B[k x n] */                                                                             \
  void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,         \
               bool accumulate);                                                                                 \
  void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels, double* output);       \
  void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* kernels,              \
                             double* grad_in);                                                                   \
  void conv2d_backward_kernels(const ConvGeometry& g, const double* input, const double* grad_out,              \
                               double* grad_kernels);                                                            \
  /* mask: length x length, nonzero = allowed; nullptr = all allowed. probs: batch x heads x length x length */ \
  void attention_forward(const AttentionGeometry& g, const double* q, const double* k, const double* v,         \
                         const std::uint8_t* mask, double* out, double* probs);                                 \
  void attention_backward(const AttentionGeometry& g, const double* q, const double* k, const double* v,        \
                          const double* probs, const double* grad_out, double* grad_q, double* grad_k,          \
                          double* grad_v);

namespace serial {
SEQRL_KERNEL_SET
}  // namespace serial

namespace parallel {
SEQRL_KERNEL_SET
}  // namespace parallel

#undef SEQRL_KERNEL_SET

}  // namespace seqrl::kernels
