#include "seqrl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqrl/error.hpp"
#include "seqrl/kernels.hpp"

namespace seqrl {

namespace kp = kernels::parallel;
using detail::Node;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw StateError(std::string(op) + ": undefined tensor");
}

Node& input(Node& self, std::size_t i) { return *self.inputs[i]; }

// Applies f elementwise and records g(x, y, dy) -> dx.
template <typename F, typename G>
Tensor unary(const char* op, const Tensor& x, F f, G g) {
  require_defined(op, x);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::make_result(op, x.shape(), std::move(out), {x}, [g](Node& self) {
    Node& a = input(self, 0);
    if (!a.requires_grad) return;
    auto& ga = a.ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g(a.value[i], self.value[i], self.grad[i]);
  });
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

std::size_t AttentionMask::count_allowed() const {
  return static_cast<std::size_t>(std::count_if(allowed.begin(), allowed.end(), [](auto v) { return v != 0; }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  std::vector<double> out(m * n);
  kp::gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  return Tensor::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& A = input(self, 0);
    Node& B = input(self, 1);
    if (A.requires_grad) kp::gemm_nt(self.grad.data(), B.value.data(), A.ensure_grad().data(), m, n, k, true);
    if (B.requires_grad) kp::gemm_tn(A.value.data(), self.grad.data(), B.ensure_grad().data(), k, m, n, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined("linear", x);
  require_defined("linear", weight);
  if (x.rank() < 1 || weight.rank() != 2 || x.shape().back() != weight.size(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t k = weight.size(0), n = weight.size(1), m = x.numel() / k;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.size(0) != n)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match output width " +
                         std::to_string(n));
  }
  std::vector<double> out(m * n);
  kp::gemm(x.data().data(), weight.data().data(), out.data(), m, k, n, false);
  if (has_bias) {
    auto b = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
    }
  }
  Shape shape = x.shape();
  shape.back() = n;
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result("linear", std::move(shape), std::move(out), std::move(inputs),
                             [m, k, n, has_bias](Node& self) {
                               Node& X = input(self, 0);
                               Node& W = input(self, 1);
                               if (X.requires_grad) {
                                 kp::gemm_nt(self.grad.data(), W.value.data(), X.ensure_grad().data(), m, n, k, true);
                               }
                               if (W.requires_grad) {
                                 kp::gemm_tn(X.value.data(), self.grad.data(), W.ensure_grad().data(), k, m, n, true);
                               }
                               if (has_bias && input(self, 2).requires_grad) {
                                 auto& gb = input(self, 2).ensure_grad();
                                 for (std::size_t j = 0; j < n; ++j) {
                                   double s = 0.0;
                                   for (std::size_t i = 0; i < m; ++i) s += self.grad[i * n + j];
                                   gb[j] += s;
                                 }
                               }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined("add", a);
  require_defined("add", b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const bool suffix = bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.end() - static_cast<std::ptrdiff_t>(bs.size()));
  if (!suffix) throw DimensionError("add: cannot broadcast " + shape_str(bs) + " onto " + shape_str(as));
  const std::size_t inner = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
  return Tensor::make_result("add", as, std::move(out), {a, b}, [inner](Node& self) {
    Node& A = input(self, 0);
    Node& B = input(self, 1);
    if (A.requires_grad) {
      auto& ga = A.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& gb = B.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % inner] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& A = input(self, 0);
    Node& B = input(self, 1);
    if (A.requires_grad) {
      auto& ga = A.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& gb = B.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& A = input(self, 0);
    Node& B = input(self, 1);
    if (A.requires_grad) {
      auto& ga = A.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& gb = B.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * A.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double, double dy) { return dy * factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      "add_scalar", x, [value](double v) { return v + value; }, [](double, double, double dy) { return dy; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape("minimum", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  // Ties route the gradient to `a`.
  return Tensor::make_result("minimum", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& A = input(self, 0);
    Node& B = input(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const bool take_a = A.value[i] <= B.value[i];
      if (take_a && A.requires_grad) A.ensure_grad()[i] += self.grad[i];
      if (!take_a && B.requires_grad) B.ensure_grad()[i] += self.grad[i];
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double, double dy) { return (v > lo && v < hi) ? dy : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double, double dy) { return v > 0.0 ? dy : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double, double dy) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        return dy * (cdf + v * pdf);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y, double dy) { return dy * y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y, double dy) { return dy * (1.0 - y * y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y, double dy) { return dy * y; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined("softmax", x);
  if (axis >= x.rank()) throw IndexError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t r = 0; r < s.inner; ++r) {
      const std::size_t base = o * s.extent * s.inner + r;
      double m = in[base];
      for (std::size_t j = 1; j < s.extent; ++j) m = std::max(m, in[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        out[base + j * s.inner] = std::exp(in[base + j * s.inner] - m);
        total += out[base + j * s.inner];
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  return Tensor::make_result("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t r = 0; r < s.inner; ++r) {
        const std::size_t base = o * s.extent * s.inner + r;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.extent; ++j) dot += self.grad[base + j * s.inner] * self.value[base + j * s.inner];
        for (std::size_t j = 0; j < s.extent; ++j) {
          const std::size_t idx = base + j * s.inner;
          gx[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  require_defined("log_softmax", x);
  if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("log_softmax: empty last dimension");
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    const double m = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - m);
    const double lse = m + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lse;
  }
  return Tensor::make_result("log_softmax", x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += self.grad[r * n + j] - std::exp(self.value[r * n + j]) * gsum;
      }
    }
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined("layernorm", x);
  if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("layernorm: zero-length last dimension");
  const std::size_t n = x.shape().back(), rows = x.numel() / n;
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layernorm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last dimension " + std::to_string(n));
  }
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  auto in = x.data();
  auto g = gain.data();
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (row[j] - mu) * inv_std[r];
      out[r * n + j] = g[j] * xhat[r * n + j] + b[j];
    }
  }
  return Tensor::make_result(
      "layernorm", x.shape(), std::move(out), {x, gain, bias},
      [rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& X = input(self, 0);
        Node& G = input(self, 1);
        Node& B = input(self, 2);
        if (G.requires_grad) {
          auto& gg = G.ensure_grad();
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) s += self.grad[r * n + j] * xhat[r * n + j];
            gg[j] += s;
          }
        }
        if (B.requires_grad) {
          auto& gb = B.ensure_grad();
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) s += self.grad[r * n + j];
            gb[j] += s;
          }
        }
        if (X.requires_grad) {
          auto& gx = X.ensure_grad();
          std::vector<double> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = self.grad[r * n + j] * G.value[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * xhat[r * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              gx[r * n + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[r * n + j] * mean_dx);
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& input_t, const Tensor& kernels, std::size_t stride, std::size_t padding,
              const Tensor& bias) {
  require_defined("conv2d", input_t);
  require_defined("conv2d", kernels);
  const bool batched = input_t.rank() == 4;
  if ((input_t.rank() != 3 && !batched) || kernels.rank() != 4) {
    throw DimensionError("conv2d: expected input [C,H,W] or [N,C,H,W] and kernels [F,C,kh,kw], got " +
                         shape_str(input_t.shape()) + " and " + shape_str(kernels.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t off = batched ? 1 : 0;
  kernels::ConvGeometry g{batched ? input_t.size(0) : 1, input_t.size(off), input_t.size(off + 1),
                          input_t.size(off + 2), kernels.size(0), kernels.size(2), kernels.size(3), stride, padding};
  if (kernels.size(1) != g.channels) {
    throw DimensionError("conv2d: input " + shape_str(input_t.shape()) + " has " + std::to_string(g.channels) +
                         " channels but kernels " + shape_str(kernels.shape()) + " expect " +
                         std::to_string(kernels.size(1)));
  }
  if (g.kernel_h > g.height + 2 * padding || g.kernel_w > g.width + 2 * padding) {
    throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) + " larger than padded input " +
                         shape_str(input_t.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.filters) throw DimensionError("conv2d: bias must have one entry per filter");
  const std::size_t oh = g.out_h(), ow = g.out_w();
  std::vector<double> out(g.batch * g.filters * oh * ow);
  kp::conv2d_forward(g, input_t.data().data(), kernels.data().data(), out.data());
  if (has_bias) {
    auto b = bias.data();
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t f = 0; f < g.filters; ++f) {
        double* o = out.data() + (n * g.filters + f) * oh * ow;
        for (std::size_t p = 0; p < oh * ow; ++p) o[p] += b[f];
      }
    }
  }
  Shape shape = batched ? Shape{g.batch, g.filters, oh, ow} : Shape{g.filters, oh, ow};
  std::vector<Tensor> inputs{input_t, kernels};
  if (has_bias) inputs.push_back(bias);
  return Tensor::make_result("conv2d", std::move(shape), std::move(out), std::move(inputs), [g, has_bias](Node& self) {
    Node& X = input(self, 0);
    Node& K = input(self, 1);
    if (X.requires_grad) kp::conv2d_backward_input(g, self.grad.data(), K.value.data(), X.ensure_grad().data());
    if (K.requires_grad) kp::conv2d_backward_kernels(g, X.value.data(), self.grad.data(), K.ensure_grad().data());
    if (has_bias && input(self, 2).requires_grad) {
      auto& gb = input(self, 2).ensure_grad();
      const std::size_t positions = g.out_h() * g.out_w();
      for (std::size_t f = 0; f < g.filters; ++f) {
        double s = 0.0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* go = self.grad.data() + (n * g.filters + f) * positions;
          for (std::size_t p = 0; p < positions; ++p) s += go[p];
        }
        gb[f] += s;
      }
    }
  });
}

namespace {

kernels::AttentionGeometry attention_geometry(const Tensor& q, const Tensor& k, std::size_t heads,
                                              const AttentionMask* mask) {
  if (q.rank() != 3) throw DimensionError("attention: expected [B,T,d], got " + shape_str(q.shape()));
  if (k.shape() != q.shape()) throw DimensionError("attention: q/k shape mismatch");
  if (heads == 0 || q.size(2) % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.size(2)) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (mask && mask->size != q.size(1)) {
    throw DimensionError("attention: mask of size " + std::to_string(mask->size) + " for sequence length " +
                         std::to_string(q.size(1)));
  }
  return {q.size(0), q.size(1), q.size(2), heads};
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const AttentionMask* mask) {
  require_defined("attention", q);
  const auto g = attention_geometry(q, k, heads, mask);
  if (v.shape() != q.shape()) throw DimensionError("attention: q/v shape mismatch");
  std::vector<double> out(q.numel());
  std::vector<double> probs(g.batch * heads * g.length * g.length);
  kp::attention_forward(g, q.data().data(), k.data().data(), v.data().data(), mask ? mask->allowed.data() : nullptr,
                        out.data(), probs.data());
  return Tensor::make_result("attention", q.shape(), std::move(out), {q, k, v},
                             [g, probs = std::move(probs)](Node& self) {
                               Node& Q = input(self, 0);
                               Node& K = input(self, 1);
                               Node& V = input(self, 2);
                               // The kernel writes all three; scratch absorbs the untracked ones.
                               std::vector<double> scratch_q, scratch_k, scratch_v;
                               auto target = [](Node& n, std::vector<double>& scratch) {
                                 if (n.requires_grad) return n.ensure_grad().data();
                                 scratch.assign(n.value.size(), 0.0);
                                 return scratch.data();
                               };
                               double* gq = target(Q, scratch_q);
                               double* gk = target(K, scratch_k);
                               double* gv = target(V, scratch_v);
                               kp::attention_backward(g, Q.value.data(), K.value.data(), V.value.data(), probs.data(),
                                                      self.grad.data(), gq, gk, gv);
                             });
}

std::vector<double> attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, const AttentionMask* mask) {
  const auto g = attention_geometry(q, k, heads, mask);
  std::vector<double> out(q.numel());
  std::vector<double> probs(g.batch * heads * g.length * g.length);
  kp::attention_forward(g, q.data().data(), k.data().data(), q.data().data(), mask ? mask->allowed.data() : nullptr,
                        out.data(), probs.data());
  return probs;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return Tensor::make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined("slice", x);
  if (axis >= x.rank()) throw IndexError("slice: axis out of range for " + shape_str(x.shape()));
  if (begin > end || end > x.size(axis)) {
    throw IndexError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  const std::size_t width = end - begin;
  Shape shape = x.shape();
  shape[axis] = width;
  std::vector<double> out(s.outer * width * s.inner);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * s.extent + begin) * s.inner), width * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * width * s.inner));
  }
  return Tensor::make_result("slice", std::move(shape), std::move(out), {x}, [s, begin, width](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < width * s.inner; ++i) {
        gx[(o * s.extent + begin) * s.inner + i] += self.grad[o * width * s.inner + i];
      }
    }
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor sliced = slice(x, axis, index, index + 1);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(sliced, std::move(shape));
}

Tensor stack(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("stack: no inputs");
  const Shape& base = xs.front().shape();
  if (axis > base.size()) throw IndexError("stack: axis out of range");
  for (const auto& t : xs) {
    if (t.shape() != base) throw DimensionError("stack: shape mismatch " + shape_str(base) + " vs " + shape_str(t.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= base[i];
  for (std::size_t i = axis; i < base.size(); ++i) inner *= base[i];
  const std::size_t count = xs.size();
  Shape shape = base;
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  std::vector<double> out(outer * count * inner);
  for (std::size_t k = 0; k < count; ++k) {
    auto in = xs[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * count + k) * inner));
    }
  }
  return Tensor::make_result("stack", std::move(shape), std::move(out), xs, [outer, count, inner](Node& self) {
    for (std::size_t k = 0; k < count; ++k) {
      Node& X = input(self, k);
      if (!X.requires_grad) continue;
      auto& gx = X.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) gx[o * inner + i] += self.grad[(o * count + k) * inner + i];
      }
    }
  });
}

Tensor take_rows(const Tensor& table, std::span<const std::size_t> rows) {
  require_defined("take_rows", table);
  if (table.rank() != 2) throw DimensionError("take_rows: table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t vocab = table.size(0), d = table.size(1);
  std::vector<double> out(rows.size() * d);
  auto in = table.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= vocab) throw IndexError("take_rows: row " + std::to_string(rows[i]) + " out of range " + std::to_string(vocab));
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::make_result("take_rows", {rows.size(), d}, std::move(out), {table}, [idx = std::move(idx), d](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) gx[idx[i] * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  require_defined("pick", x);
  if (x.rank() != 2) throw DimensionError("pick: expected rank 2, got " + shape_str(x.shape()));
  if (rows.size() != cols.size()) throw DimensionError("pick: rows/cols length mismatch");
  const std::size_t n_rows = x.size(0), n_cols = x.size(1);
  std::vector<std::size_t> flat(rows.size());
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows || cols[i] >= n_cols) {
      throw IndexError("pick: index (" + std::to_string(rows[i]) + "," + std::to_string(cols[i]) + ") out of range for " +
                       shape_str(x.shape()));
    }
    flat[i] = rows[i] * n_cols + cols[i];
    out[i] = x.data()[flat[i]];
  }
  return Tensor::make_result("pick", {rows.size()}, std::move(out), {x}, [flat = std::move(flat)](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (std::size_t i = 0; i < flat.size(); ++i) gx[flat[i]] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result("sum", {}, {s}, {x}, [](Node& self) {
    Node& X = input(self, 0);
    if (!X.requires_grad) return;
    auto& gx = X.ensure_grad();
    for (double& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape("mse", pred, target);
  if (pred.numel() == 0) throw DimensionError("mse: empty tensors");
  const std::size_t n = pred.numel();
  std::vector<double> diff(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = pred.data()[i] - target.data()[i];
    s += diff[i] * diff[i];
  }
  return Tensor::make_result("mse", {}, {s / static_cast<double>(n)}, {pred}, [diff = std::move(diff), n](Node& self) {
    Node& P = input(self, 0);
    if (!P.requires_grad) return;
    auto& gp = P.ensure_grad();
    const double factor = 2.0 * self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) gp[i] += factor * diff[i];
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_defined("cross_entropy", logits);
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [B,A], got " + shape_str(logits.shape()));
  const std::size_t batch = logits.size(0), actions = logits.size(1);
  if (targets.size() != batch) throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch " + std::to_string(batch));
  if (batch == 0) throw DimensionError("cross_entropy: empty batch");
  for (auto t : targets) {
    if (t >= actions) throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0," + std::to_string(actions) + ")");
  }
  std::vector<std::size_t> rows(batch);
  for (std::size_t i = 0; i < batch; ++i) rows[i] = i;
  return scale(mean(pick(log_softmax(logits), rows, targets)), -1.0);
}

}  // namespace seqrl
