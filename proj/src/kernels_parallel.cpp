#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "seqrl/kernels.hpp"

namespace seqrl::kernels::parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = std::ptrdiff_t;

inline void gemm_row(const double* a_row, const double* b, double* c_row, double* acc, std::size_t k,
                     std::size_t n, bool accumulate) {
  std::fill(acc, acc + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = a_row[p];
    const double* bp = b + p * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += aip * bp[j];
  }
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) c_row[j] += acc[j];
  } else {
    std::memcpy(c_row, acc, n * sizeof(double));
  }
}

// Unrolled patches of one sample: col[(c*kh + i)*kw + j][oh*ow_n + ow].
void im2col(const ConvGeometry& g, const double* input, double* col, std::size_t col_stride,
            std::size_t col_offset) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        double* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * col_stride + col_offset;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const auto ih = static_cast<Index>(oh * g.stride + i) - static_cast<Index>(g.padding);
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const auto iw = static_cast<Index>(ow * g.stride + j) - static_cast<Index>(g.padding);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<Index>(g.height) &&
                                iw < static_cast<Index>(g.width);
            row[oh * ow_n + ow] = inside ? input[(c * g.height + ih) * g.width + iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* grad_in) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), positions = oh_n * ow_n;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const double* row = col + ((c * g.kernel_h + i) * g.kernel_w + j) * positions;
        for (std::size_t oh = 0; oh < oh_n; ++oh) {
          const auto ih = static_cast<Index>(oh * g.stride + i) - static_cast<Index>(g.padding);
          if (ih < 0 || ih >= static_cast<Index>(g.height)) continue;
          for (std::size_t ow = 0; ow < ow_n; ++ow) {
            const auto iw = static_cast<Index>(ow * g.stride + j) - static_cast<Index>(g.padding);
            if (iw < 0 || iw >= static_cast<Index>(g.width)) continue;
            grad_in[(c * g.height + ih) * g.width + iw] += row[oh * ow_n + ow];
          }
        }
      }
    }
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
#pragma omp parallel if (m * k * n > kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      gemm_row(a + i * k, b, c + i * n, acc.data(), k, n, accumulate);
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
#pragma omp parallel if (m * k * n > kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      gemm_row(a + i * k, bt.data(), c + i * n, acc.data(), k, n, accumulate);
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
#pragma omp parallel if (m * k * n > kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double api = a[p * m + i];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += api * bp[j];
      }
      double* c_row = c + i * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] = accumulate ? c_row[j] + acc[j] : acc[j];
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels, double* output) {
  const std::size_t positions = g.out_h() * g.out_w();
  const std::size_t patch = g.channels * g.kernel_h * g.kernel_w;
  const std::size_t in_size = g.channels * g.height * g.width;
#pragma omp parallel if (g.batch * g.filters * positions * patch > kParallelWork)
  {
    std::vector<double> col(patch * positions), acc(positions);
#pragma omp for schedule(static)
    for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
      im2col(g, input + n * in_size, col.data(), positions, 0);
      double* out = output + n * g.filters * positions;
      for (std::size_t f = 0; f < g.filters; ++f) {
        gemm_row(kernels + f * patch, col.data(), out + f * positions, acc.data(), patch, positions, false);
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* kernels, double* grad_in) {
  const std::size_t positions = g.out_h() * g.out_w();
  const std::size_t patch = g.channels * g.kernel_h * g.kernel_w;
  const std::size_t in_size = g.channels * g.height * g.width;
#pragma omp parallel if (g.batch * g.filters * positions * patch > kParallelWork)
  {
    std::vector<double> dcol(patch * positions), acc(positions);
#pragma omp for schedule(static)
    for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
      const double* go = grad_out + n * g.filters * positions;
      // dcol = kernels^T . grad_out_n, one patch row at a time.
      for (std::size_t p = 0; p < patch; ++p) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t f = 0; f < g.filters; ++f) {
          const double w = kernels[f * patch + p];
          const double* go_row = go + f * positions;
          for (std::size_t q = 0; q < positions; ++q) acc[q] += w * go_row[q];
        }
        std::copy(acc.begin(), acc.end(), dcol.begin() + static_cast<Index>(p * positions));
      }
      col2im_add(g, dcol.data(), grad_in + n * in_size);
    }
  }
}

void conv2d_backward_kernels(const ConvGeometry& g, const double* input, const double* grad_out,
                             double* grad_kernels) {
  const std::size_t positions = g.out_h() * g.out_w();
  const std::size_t patch = g.channels * g.kernel_h * g.kernel_w;
  const std::size_t in_size = g.channels * g.height * g.width;
  const std::size_t columns = g.batch * positions;
  std::vector<double> col(patch * columns), go_t(g.filters * columns);
#pragma omp parallel for schedule(static) if (g.batch * patch * positions > kParallelWork)
  for (Index n = 0; n < static_cast<Index>(g.batch); ++n) {
    im2col(g, input + n * in_size, col.data(), columns, n * positions);
    for (std::size_t f = 0; f < g.filters; ++f) {
      std::memcpy(go_t.data() + f * columns + n * positions, grad_out + (n * g.filters + f) * positions,
                  positions * sizeof(double));
    }
  }
  gemm_nt(go_t.data(), col.data(), grad_kernels, g.filters, columns, patch, true);
}

void attention_forward(const AttentionGeometry& g, const double* q, const double* k, const double* v,
                       const std::uint8_t* mask, double* out, double* probs) {
  const std::size_t T = g.length, D = g.width, dh = g.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto pairs = static_cast<Index>(g.batch * g.heads);
#pragma omp parallel if (g.batch * g.heads * T * T * dh > kParallelWork)
  {
    std::vector<double> qh(T * dh), kh(T * dh), vh(T * dh), oh(T * dh), acc(dh);
#pragma omp for schedule(static)
    for (Index bh = 0; bh < pairs; ++bh) {
      const std::size_t b = static_cast<std::size_t>(bh) / g.heads, h = static_cast<std::size_t>(bh) % g.heads;
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t src = (b * T + t) * D + h * dh;
        std::memcpy(&qh[t * dh], q + src, dh * sizeof(double));
        std::memcpy(&kh[t * dh], k + src, dh * sizeof(double));
        std::memcpy(&vh[t * dh], v + src, dh * sizeof(double));
      }
      double* p = probs + static_cast<std::size_t>(bh) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        double* prow = p + i * T;
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
          if (mask && !mask[i * T + j]) continue;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qh[i * dh + c] * kh[j * dh + c];
          prow[j] = s * scale;
          row_max = std::max(row_max, prow[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          prow[j] = (mask && !mask[i * T + j]) ? 0.0 : std::exp(prow[j] - row_max);
          total += prow[j];
        }
        for (std::size_t j = 0; j < T; ++j) prow[j] = total > 0.0 ? prow[j] / total : 0.0;
        gemm_row(prow, vh.data(), &oh[i * dh], acc.data(), T, dh, false);
      }
      for (std::size_t t = 0; t < T; ++t) std::memcpy(out + (b * T + t) * D + h * dh, &oh[t * dh], dh * sizeof(double));
    }
  }
}

void attention_backward(const AttentionGeometry& g, const double* q, const double* k, const double* v,
                        const double* probs, const double* grad_out, double* grad_q, double* grad_k,
                        double* grad_v) {
  const std::size_t T = g.length, D = g.width, dh = g.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto pairs = static_cast<Index>(g.batch * g.heads);
#pragma omp parallel if (g.batch * g.heads * T * T * dh > kParallelWork)
  {
    std::vector<double> qh(T * dh), kh(T * dh), vh(T * dh), go(T * dh), ds(T * T), tmp(T * dh);
#pragma omp for schedule(static)
    for (Index bh = 0; bh < pairs; ++bh) {
      const std::size_t b = static_cast<std::size_t>(bh) / g.heads, h = static_cast<std::size_t>(bh) % g.heads;
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t src = (b * T + t) * D + h * dh;
        std::memcpy(&qh[t * dh], q + src, dh * sizeof(double));
        std::memcpy(&kh[t * dh], k + src, dh * sizeof(double));
        std::memcpy(&vh[t * dh], v + src, dh * sizeof(double));
        std::memcpy(&go[t * dh], grad_out + src, dh * sizeof(double));
      }
      const double* p = probs + static_cast<std::size_t>(bh) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        double weighted = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          double dp = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dp += go[i * dh + c] * vh[j * dh + c];
          ds[i * T + j] = dp;
          weighted += p[i * T + j] * dp;
        }
        for (std::size_t j = 0; j < T; ++j) ds[i * T + j] = p[i * T + j] * (ds[i * T + j] - weighted);
      }
      // grad_v = P^T . dO ; grad_k = scale * dS^T . Q ; grad_q = scale * dS . K
      gemm_tn(p, go.data(), tmp.data(), T, T, dh, false);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < dh; ++c) grad_v[(b * T + t) * D + h * dh + c] += tmp[t * dh + c];
      }
      gemm_tn(ds.data(), qh.data(), tmp.data(), T, T, dh, false);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < dh; ++c) grad_k[(b * T + t) * D + h * dh + c] += tmp[t * dh + c] * scale;
      }
      std::vector<double> acc(dh);
      for (std::size_t i = 0; i < T; ++i) gemm_row(&ds[i * T], kh.data(), &tmp[i * dh], acc.data(), T, dh, false);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < dh; ++c) grad_q[(b * T + t) * D + h * dh + c] += tmp[t * dh + c] * scale;
      }
    }
  }
}

}  // namespace seqrl::kernels::parallel
