#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "seqrl/kernels.hpp"

namespace seqrl::kernels::serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels, double* output) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t f = 0; f < g.filters; ++f) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double s = 0.0;
          for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t i = 0; i < g.kernel_h; ++i) {
              for (std::size_t j = 0; j < g.kernel_w; ++j) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.padding);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                    iw >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                s += input[((n * g.channels + c) * g.height + ih) * g.width + iw] *
                     kernels[((f * g.channels + c) * g.kernel_h + i) * g.kernel_w + j];
              }
            }
          }
          output[((n * g.filters + f) * oh_n + oh) * ow_n + ow] = s;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const double* grad_out, const double* kernels, double* grad_in) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            for (std::size_t ow = 0; ow < ow_n; ++ow) {
              double d = 0.0;
              for (std::size_t f = 0; f < g.filters; ++f) {
                d += kernels[((f * g.channels + c) * g.kernel_h + i) * g.kernel_w + j] *
                     grad_out[((n * g.filters + f) * oh_n + oh) * ow_n + ow];
              }
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.padding);
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
              if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                  iw >= static_cast<std::ptrdiff_t>(g.width)) {
                continue;
              }
              grad_in[((n * g.channels + c) * g.height + ih) * g.width + iw] += d;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernels(const ConvGeometry& g, const double* input, const double* grad_out,
                             double* grad_kernels) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w();
  for (std::size_t f = 0; f < g.filters; ++f) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          double s = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t oh = 0; oh < oh_n; ++oh) {
              for (std::size_t ow = 0; ow < ow_n; ++ow) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.padding);
                const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
                if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(g.height) ||
                    iw >= static_cast<std::ptrdiff_t>(g.width)) {
                  continue;
                }
                s += grad_out[((n * g.filters + f) * oh_n + oh) * ow_n + ow] *
                     input[((n * g.channels + c) * g.height + ih) * g.width + iw];
              }
            }
          }
          grad_kernels[((f * g.channels + c) * g.kernel_h + i) * g.kernel_w + j] += s;
        }
      }
    }
  }
}

void attention_forward(const AttentionGeometry& g, const double* q, const double* k, const double* v,
                       const std::uint8_t* mask, double* out, double* probs) {
  const std::size_t T = g.length, D = g.width, dh = g.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        double* p = probs + ((b * g.heads + h) * T + i) * T;
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < T; ++j) {
          if (mask && !mask[i * T + j]) {
            p[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q[(b * T + i) * D + h * dh + c] * k[(b * T + j) * D + h * dh + c];
          p[j] = s * scale;
          row_max = std::max(row_max, p[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          p[j] = (mask && !mask[i * T + j]) ? 0.0 : std::exp(p[j] - row_max);
          total += p[j];
        }
        for (std::size_t j = 0; j < T; ++j) p[j] = total > 0.0 ? p[j] / total : 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < T; ++j) s += p[j] * v[(b * T + j) * D + h * dh + c];
          out[(b * T + i) * D + h * dh + c] = s;
        }
      }
    }
  }
}

void attention_backward(const AttentionGeometry& g, const double* q, const double* k, const double* v,
                        const double* probs, const double* grad_out, double* grad_q, double* grad_k,
                        double* grad_v) {
  const std::size_t T = g.length, D = g.width, dh = g.head_width();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dscore(T * T);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t h = 0; h < g.heads; ++h) {
      const double* p = probs + (b * g.heads + h) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        double weighted = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
          double dp = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dp += grad_out[(b * T + i) * D + h * dh + c] * v[(b * T + j) * D + h * dh + c];
          dscore[i * T + j] = dp;
          weighted += p[i * T + j] * dp;
        }
        for (std::size_t j = 0; j < T; ++j) dscore[i * T + j] = p[i * T + j] * (dscore[i * T + j] - weighted);
      }
      for (std::size_t j = 0; j < T; ++j) {
        for (std::size_t c = 0; c < dh; ++c) {
          double sv = 0.0, sk = 0.0;
          for (std::size_t i = 0; i < T; ++i) {
            sv += p[i * T + j] * grad_out[(b * T + i) * D + h * dh + c];
            sk += dscore[i * T + j] * q[(b * T + i) * D + h * dh + c];
          }
          grad_v[(b * T + j) * D + h * dh + c] += sv;
          grad_k[(b * T + j) * D + h * dh + c] += sk * scale;
        }
      }
      for (std::size_t i = 0; i < T; ++i) {
        for (std::size_t c = 0; c < dh; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < T; ++j) s += dscore[i * T + j] * k[(b * T + j) * D + h * dh + c];
          grad_q[(b * T + i) * D + h * dh + c] += s * scale;
        }
      }
    }
  }
}

}  // namespace seqrl::kernels::serial
