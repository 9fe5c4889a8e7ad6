// Copyright 2026 The w2vj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "w2vj/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "w2vj/rng.hpp"

namespace w2vj::ops {

namespace {

using detail::Node;

struct Rows {
  std::size_t rows;
  std::size_t cols;
};

Rows as_rows(const Tensor& x) {
  const auto cols = x.shape().back();
  return {x.numel() / cols, cols};
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

void require_matrix(const Tensor& x, const char* op) {
  require(x.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

// Grad slot of parent i, or nullptr when it does not require grad.
std::vector<double>* pgrad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad : nullptr;
}

const std::vector<double>& pvalue(Node& self, std::size_t i) { return self.parents[i]->value; }

template <class F, class D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  std::vector<double> y(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xs[i]);
  return Tensor::make(x.shape(), std::move(y), {x}, [dfdx](Node& self) {
    auto* gx = pgrad(self, 0);
    const auto& xv = pvalue(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = pgrad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return Tensor::make(a.shape(), std::move(y), {a, b}, [](Node& self) {
    const auto& av = pvalue(self, 0);
    const auto& bv = pvalue(self, 1);
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor scale_grad(const Tensor& x, double s) {
  return unary(x, [](double v) { return v; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const auto [rows, cols] = as_rows(x);
  require(bias.numel() == cols, "add_row: bias length " + std::to_string(bias.numel()) + " vs " +
                                    std::to_string(cols) + " columns");
  std::vector<double> y(x.numel());
  auto xs = x.data();
  auto bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xs[r * cols + c] + bs[c];
  return Tensor::make(x.shape(), std::move(y), {x, bias}, [rows, cols](Node& self) {
    if (auto* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = pgrad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c];
  });
}

Tensor mul_row(const Tensor& x, const Tensor& gain) {
  const auto [rows, cols] = as_rows(x);
  require(gain.numel() == cols, "mul_row: gain length mismatch");
  std::vector<double> y(x.numel());
  auto xs = x.data();
  auto gs = gain.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xs[r * cols + c] * gs[c];
  return Tensor::make(x.shape(), std::move(y), {x, gain}, [rows, cols](Node& self) {
    const auto& xv = pvalue(self, 0);
    const auto& gv = pvalue(self, 1);
    if (auto* g = pgrad(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += self.grad[r * cols + c] * gv[c];
    if (auto* g = pgrad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*g)[c] += self.grad[r * cols + c] * xv[r * cols + c];
  });
}

Tensor mul_const(const Tensor& x, const std::vector<double>& mask) {
  require(mask.size() == x.numel(), "mul_const: mask size mismatch");
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * mask[i];
  return Tensor::make(x.shape(), std::move(y), {x}, [mask](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * mask[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> y(m * n);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), y);
  return Tensor::make({m, n}, std::move(y), {a, b}, [m, n, k](Node& self) {
    // dA = dY B^T, dB = A^T dY
    if (auto* g = pgrad(self, 0)) kernels::gemm_nt(m, k, n, self.grad, pvalue(self, 1), *g, true);
    if (auto* g = pgrad(self, 1)) kernels::gemm_tn(k, n, m, pvalue(self, 0), self.grad, *g, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_matrix(x, "linear");
  require_matrix(weight, "linear");
  const auto m = x.dim(0), k = x.dim(1), n = weight.dim(0);
  require(weight.dim(1) == k, "linear: input width " + std::to_string(k) + " vs weight " + shape_str(weight.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == n, "linear: bias length mismatch");
  std::vector<double> y(m * n);
  kernels::gemm_nt(m, n, k, x.data(), weight.data(), y);
  if (has_bias) {
    auto bs = bias.data();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) y[r * n + c] += bs[c];
  }
  std::vector<Tensor> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::make({m, n}, std::move(y), std::move(parents), [m, n, k, has_bias](Node& self) {
    // dX = dY W, dW = dY^T X
    if (auto* g = pgrad(self, 0)) kernels::gemm_nn(m, k, n, self.grad, pvalue(self, 1), *g, true);
    if (auto* g = pgrad(self, 1)) kernels::gemm_tn(n, k, m, self.grad, pvalue(self, 0), *g, true);
    if (has_bias) {
      if (auto* g = pgrad(self, 2))
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) (*g)[c] += self.grad[r * n + c];
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const auto r = x.dim(0), c = x.dim(1);
  std::vector<double> y(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xs[i * c + j];
  return Tensor::make({c, r}, std::move(y), {x}, [r, c](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> y(x.data().begin(), x.data().end());
  return Tensor::make(std::move(shape), std::move(y), {x}, [](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor swish(const Tensor& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make({1}, {s}, {x}, [](Node& self) {
    auto* g = pgrad(self, 0);
    for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  const auto [rows, cols] = as_rows(x);
  std::vector<double> y(cols, 0.0);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[c] += xs[r * cols + c];
  for (auto& v : y) v /= static_cast<double>(rows);
  return Tensor::make({cols}, std::move(y), {x}, [rows, cols](Node& self) {
    auto* g = pgrad(self, 0);
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += self.grad[c] * inv;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto [rows, cols] = as_rows(x);
  require(gamma.numel() == cols && beta.numel() == cols, "layer_norm: affine parameters must match last dim");
  std::vector<double> y(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xs = x.data();
  auto gs = gamma.data();
  auto bs = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += row[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (row[c] - mu) * inv_std[r];
      y[r * cols + c] = xhat[r * cols + c] * gs[c] + bs[c];
    }
  }
  return Tensor::make(x.shape(), std::move(y), {x, gamma, beta},
                      [rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                        const auto& gv = pvalue(self, 1);
                        auto* gx = pgrad(self, 0);
                        auto* gg = pgrad(self, 1);
                        auto* gb = pgrad(self, 2);
                        const double n = static_cast<double>(cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                          const double* dy = self.grad.data() + r * cols;
                          const double* xh = xhat.data() + r * cols;
                          if (gx) {
                            double mean_d = 0.0, mean_dx = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) {
                              const double d = dy[c] * gv[c];
                              mean_d += d;
                              mean_dx += d * xh[c];
                            }
                            mean_d /= n;
                            mean_dx /= n;
                            for (std::size_t c = 0; c < cols; ++c)
                              (*gx)[r * cols + c] += inv_std[r] * (dy[c] * gv[c] - mean_d - xh[c] * mean_dx);
                          }
                          if (gg)
                            for (std::size_t c = 0; c < cols; ++c) (*gg)[c] += dy[c] * xh[c];
                          if (gb)
                            for (std::size_t c = 0; c < cols; ++c) (*gb)[c] += dy[c];
                        }
                      });
}

Tensor softmax_rows(const Tensor& x, std::size_t valid_cols) {
  const auto [rows, cols] = as_rows(x);
  require(valid_cols >= 1 && valid_cols <= cols, "softmax_rows: valid_cols out of range");
  std::vector<double> y(x.numel(), 0.0);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * cols;
    const double mx = *std::max_element(row, row + valid_cols);
    double z = 0.0;
    for (std::size_t c = 0; c < valid_cols; ++c) z += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < valid_cols; ++c) y[r * cols + c] = std::exp(row[c] - mx) / z;
  }
  return Tensor::make(x.shape(), std::move(y), {x}, [rows, cols](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * dy[c];
      for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += yr[c] * (dy[c] - dot);
    }
  });
}

Tensor softmax_rows(const Tensor& x) { return softmax_rows(x, x.shape().back()); }

Tensor log_softmax_rows(const Tensor& x) {
  const auto [rows, cols] = as_rows(x);
  std::vector<double> y(x.numel());
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = row[c] - lse;
  }
  return Tensor::make(x.shape(), std::move(y), {x}, [rows, cols](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += dy[c];
      for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += dy[c] - std::exp(yr[c]) * total;
    }
  });
}

Tensor glu(const Tensor& x) {
  const auto [rows, cols] = as_rows(x);
  require(cols % 2 == 0, "glu: last dimension must be even");
  const auto half = cols / 2;
  std::vector<double> y(rows * half);
  std::vector<double> gate(rows * half);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      gate[r * half + c] = 1.0 / (1.0 + std::exp(-xs[r * cols + half + c]));
      y[r * half + c] = xs[r * cols + c] * gate[r * half + c];
    }
  }
  Shape shape = x.shape();
  shape.back() = half;
  return Tensor::make(std::move(shape), std::move(y), {x}, [rows, cols, half, gate = std::move(gate)](Node& self) {
    auto* g = pgrad(self, 0);
    const auto& xv = pvalue(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < half; ++c) {
        const double s = gate[r * half + c];
        const double dy = self.grad[r * half + c];
        (*g)[r * cols + c] += dy * s;
        (*g)[r * cols + half + c] += dy * xv[r * cols + c] * s * (1.0 - s);
      }
    }
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const auto [rows, cols] = as_rows(x);
  std::vector<double> y(x.numel());
  std::vector<double> norms(rows);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += xs[r * cols + c] * xs[r * cols + c];
    norms[r] = std::max(std::sqrt(s), eps);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xs[r * cols + c] / norms[r];
  }
  return Tensor::make(x.shape(), std::move(y), {x}, [rows, cols, eps, norms = std::move(norms)](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      if (norms[r] <= eps) {
        for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += dy[c] / norms[r];
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * dy[c];
      for (std::size_t c = 0; c < cols; ++c) (*g)[r * cols + c] += (dy[c] - yr[c] * dot) / norms[r];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  const auto [rows, cols] = as_rows(x);
  require(count > 0 && start + count <= rows, "slice_rows: range out of bounds");
  auto xs = x.data();
  std::vector<double> y(xs.begin() + start * cols, xs.begin() + (start + count) * cols);
  return Tensor::make({count, cols}, std::move(y), {x}, [start, cols](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[start * cols + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  const auto [rows, cols] = as_rows(x);
  require(count > 0 && start + count <= cols, "slice_cols: range out of bounds");
  std::vector<double> y(rows * count);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xs.begin() + r * cols + start, count, y.begin() + r * count);
  return Tensor::make({rows, count}, std::move(y), {x}, [rows, cols, start, count](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) (*g)[r * cols + start + c] += self.grad[r * count + c];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const auto cols = parts.front().shape().back();
  std::size_t rows = 0;
  std::vector<double> y;
  for (const auto& p : parts) {
    require(p.shape().back() == cols, "concat_rows: column mismatch");
    rows += p.numel() / cols;
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  return Tensor::make({rows, cols}, std::move(y), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const auto n = self.parents[p]->value.size();
      if (auto* g = pgrad(self, p))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[offset + i];
      offset += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const auto rows = as_rows(parts.front()).rows;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto [r, c] = as_rows(p);
    require(r == rows, "concat_cols: row mismatch");
    widths.push_back(c);
    total += c;
  }
  std::vector<double> y(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto xs = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(xs.begin() + r * widths[p], widths[p], y.begin() + r * total + offset);
    offset += widths[p];
  }
  return Tensor::make({rows, total}, std::move(y), parts, [rows, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (auto* g = pgrad(self, p))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) (*g)[r * widths[p] + c] += self.grad[r * total + offset + c];
      offset += widths[p];
    }
  });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index) {
  const auto [rows, cols] = as_rows(x);
  require(!index.empty(), "gather_rows: empty index");
  std::vector<double> y(index.size() * cols);
  auto xs = x.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < rows, "gather_rows: index out of range");
    std::copy_n(xs.begin() + index[r] * cols, cols, y.begin() + r * cols);
  }
  return Tensor::make({index.size(), cols}, std::move(y), {x}, [index, cols](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*g)[index[r] * cols + c] += self.grad[r * cols + c];
  });
}

Tensor gather_cols(const Tensor& x, const std::vector<std::vector<std::size_t>>& index) {
  const auto [rows, cols] = as_rows(x);
  require(index.size() == rows && rows > 0, "gather_cols: one index row per input row");
  const auto width = index.front().size();
  require(width > 0, "gather_cols: empty index rows");
  std::vector<double> y(rows * width);
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    require(index[r].size() == width, "gather_cols: ragged index");
    for (std::size_t j = 0; j < width; ++j) {
      require(index[r][j] < cols, "gather_cols: index out of range");
      y[r * width + j] = xs[r * cols + index[r][j]];
    }
  }
  return Tensor::make({rows, width}, std::move(y), {x}, [index, cols, width](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < width; ++j) (*g)[r * cols + index[r][j]] += self.grad[r * width + j];
  });
}

Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask, const Tensor& row) {
  const auto [rows, cols] = as_rows(x);
  require(mask.size() == rows, "replace_rows: mask length mismatch");
  require(row.numel() == cols, "replace_rows: replacement width mismatch");
  std::vector<double> y(x.data().begin(), x.data().end());
  auto rs = row.data();
  for (std::size_t r = 0; r < rows; ++r)
    if (mask[r]) std::copy(rs.begin(), rs.end(), y.begin() + r * cols);
  return Tensor::make(x.shape(), std::move(y), {x, row}, [mask, rows, cols](Node& self) {
    auto* gx = pgrad(self, 0);
    auto* gr = pgrad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = self.grad[r * cols + c];
        if (mask[r]) {
          if (gr) (*gr)[c] += d;
        } else if (gx) {
          (*gx)[r * cols + c] += d;
        }
      }
    }
  });
}

Tensor mask_rows(const Tensor& x, std::size_t valid) {
  const auto [rows, cols] = as_rows(x);
  if (valid >= rows) return x;
  std::vector<double> mask(x.numel(), 0.0);
  std::fill(mask.begin(), mask.begin() + valid * cols, 1.0);
  return mul_const(x, mask);
}

Tensor relative_shift(const Tensor& x, const std::vector<std::int64_t>& positions) {
  require_matrix(x, "relative_shift");
  const auto t = x.dim(0);
  require(x.dim(1) == 2 * t - 1, "relative_shift: expected [T, 2T-1], got " + shape_str(x.shape()));
  require(positions.size() == t, "relative_shift: one position per row");
  std::vector<std::size_t> src(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      const auto rel = positions[i] - positions[j] + static_cast<std::int64_t>(t) - 1;
      require(rel >= 0 && rel < static_cast<std::int64_t>(2 * t - 1), "relative_shift: positions span exceeds T");
      src[i * t + j] = i * (2 * t - 1) + static_cast<std::size_t>(rel);
    }
  }
  std::vector<double> y(t * t);
  auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xs[src[i]];
  return Tensor::make({t, t}, std::move(y), {x}, [src = std::move(src)](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < src.size(); ++i) (*g)[src[i]] += self.grad[i];
  });
}

Tensor straight_through_onehot(const Tensor& soft) {
  const auto [rows, cols] = as_rows(soft);
  std::vector<double> y(soft.numel(), 0.0);
  auto xs = soft.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * cols;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    y[r * cols + best] = 1.0;
  }
  return Tensor::make(soft.shape(), std::move(y), {soft}, [](Node& self) {
    auto* g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  std::vector<double> mask(x.numel());
  const double keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = counter_uniform({seed, i}) < rate ? 0.0 : keep;
  return mul_const(x, mask);
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right, std::size_t groups) {
  require_matrix(x, "conv1d");
  require(weight.rank() == 3, "conv1d: weight must be [Cout, Cin/groups, K]");
  kernels::Conv1dGeometry g;
  g.in_len = x.dim(0);
  g.in_channels = x.dim(1);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad_left = pad_left;
  g.pad_right = pad_right;
  g.groups = groups;
  require(groups > 0 && g.in_channels % groups == 0 && weight.dim(1) == g.in_channels / groups,
          "conv1d: weight " + shape_str(weight.shape()) + " incompatible with input " + shape_str(x.shape()));
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == g.out_channels, "conv1d: bias length mismatch");
  g.validate();
  std::vector<double> y(g.out_len() * g.out_channels);
  kernels::conv1d_forward(g, x.data(), weight.data(), has_bias ? bias.data() : std::span<const double>{}, y);
  std::vector<Tensor> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::make({g.out_len(), g.out_channels}, std::move(y), std::move(parents), [g, has_bias](Node& self) {
    auto* gx = pgrad(self, 0);
    auto* gw = pgrad(self, 1);
    auto* gb = has_bias ? pgrad(self, 2) : nullptr;
    kernels::conv1d_backward(g, pvalue(self, 0), pvalue(self, 1), self.grad, gx ? std::span<double>(*gx) : std::span<double>{},
                             gw ? std::span<double>(*gw) : std::span<double>{},
                             gb ? std::span<double>(*gb) : std::span<double>{});
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad) {
  require(x.rank() == 3, "conv2d: input must be [T, F, Cin]");
  require(weight.rank() == 4 && weight.dim(2) == weight.dim(3), "conv2d: weight must be [Cout, Cin, K, K]");
  kernels::Conv2dGeometry g;
  g.in_time = x.dim(0);
  g.in_freq = x.dim(1);
  g.in_channels = x.dim(2);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  require(weight.dim(1) == g.in_channels, "conv2d: channel mismatch");
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.numel() == g.out_channels, "conv2d: bias length mismatch");
  g.validate();
  std::vector<double> y(g.out_time() * g.out_freq() * g.out_channels);
  kernels::conv2d_forward(g, x.data(), weight.data(), has_bias ? bias.data() : std::span<const double>{}, y);
  std::vector<Tensor> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::make({g.out_time(), g.out_freq(), g.out_channels}, std::move(y), std::move(parents),
                      [g, has_bias](Node& self) {
                        auto* gx = pgrad(self, 0);
                        auto* gw = pgrad(self, 1);
                        auto* gb = has_bias ? pgrad(self, 2) : nullptr;
                        kernels::conv2d_backward(g, pvalue(self, 0), pvalue(self, 1), self.grad,
                                                 gx ? std::span<double>(*gx) : std::span<double>{},
                                                 gw ? std::span<double>(*gw) : std::span<double>{},
                                                 gb ? std::span<double>(*gb) : std::span<double>{});
                      });
}

}  // namespace w2vj::ops
