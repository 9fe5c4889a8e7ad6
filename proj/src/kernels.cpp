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

#include "w2vj/kernels.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace w2vj::kernels {

namespace {

using Index = std::int64_t;

// Valid kernel taps for output position `out` reading input index out*stride + k - pad.
inline bool tap_in_range(Index i, std::size_t len) { return i >= 0 && i < static_cast<Index>(len); }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

std::size_t Conv1dGeometry::out_len() const {
  const auto padded = in_len + pad_left + pad_right;
  if (padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

void Conv1dGeometry::validate() const {
  if (kernel == 0 || stride == 0 || groups == 0 || in_channels == 0 || out_channels == 0)
    throw std::invalid_argument("conv1d: zero-sized geometry");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw std::invalid_argument("conv1d: channels not divisible by groups");
  if (out_len() == 0)
    throw std::invalid_argument("conv1d: input of length " + std::to_string(in_len) +
                                " shorter than kernel " + std::to_string(kernel));
}

std::size_t Conv2dGeometry::out_time() const {
  const auto padded = in_time + 2 * pad;
  return padded < kernel ? 0 : (padded - kernel) / stride + 1;
}

std::size_t Conv2dGeometry::out_freq() const {
  const auto padded = in_freq + 2 * pad;
  return padded < kernel ? 0 : (padded - kernel) / stride + 1;
}

void Conv2dGeometry::validate() const {
  if (kernel == 0 || stride == 0 || in_channels == 0 || out_channels == 0)
    throw std::invalid_argument("conv2d: zero-sized geometry");
  if (out_time() == 0 || out_freq() == 0) throw std::invalid_argument("conv2d: input smaller than kernel");
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
#pragma omp parallel
  {
    std::vector<double> row(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      const double* arow = a.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      }
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + row[j] : row[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
#pragma omp parallel
  {
    std::vector<double> row(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        const double* brow = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      }
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = accumulate ? crow[j] + row[j] : row[j];
    }
  }
}

void conv1d_forward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  g.validate();
  const auto out_len = g.out_len();
  const auto cig = g.in_channels / g.groups;
  const auto cog = g.out_channels / g.groups;
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(out_len); ++t) {
    const Index base = t * static_cast<Index>(g.stride) - static_cast<Index>(g.pad_left);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const auto grp = o / cog;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t c = 0; c < cig; ++c) {
        const double* wrow = w.data() + (o * cig + c) * g.kernel;
        for (std::size_t kk = 0; kk < g.kernel; ++kk) {
          const Index i = base + static_cast<Index>(kk);
          if (!tap_in_range(i, g.in_len)) continue;
          acc += wrow[kk] * x[static_cast<std::size_t>(i) * g.in_channels + grp * cig + c];
        }
      }
      y[static_cast<std::size_t>(t) * g.out_channels + o] = acc;
    }
  }
}

void conv1d_backward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db) {
  g.validate();
  const auto out_len = g.out_len();
  const auto cig = g.in_channels / g.groups;
  const auto cog = g.out_channels / g.groups;
  const auto stride = static_cast<Index>(g.stride);
  const auto pad = static_cast<Index>(g.pad_left);

  if (!dx.empty()) {
    // Gather form: each input row is owned by one thread.
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(g.in_len); ++i) {
      for (std::size_t t = 0; t < out_len; ++t) {
        const Index kk = i + pad - static_cast<Index>(t) * stride;
        if (kk < 0 || kk >= static_cast<Index>(g.kernel)) continue;
        for (std::size_t o = 0; o < g.out_channels; ++o) {
          const auto grp = o / cog;
          const double go = dy[t * g.out_channels + o];
          for (std::size_t c = 0; c < cig; ++c) {
            dx[static_cast<std::size_t>(i) * g.in_channels + grp * cig + c] +=
                go * w[(o * cig + c) * g.kernel + static_cast<std::size_t>(kk)];
          }
        }
      }
    }
  }
  if (!dw.empty() || !db.empty()) {
#pragma omp parallel for schedule(static)
    for (Index oi = 0; oi < static_cast<Index>(g.out_channels); ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      const auto grp = o / cog;
      for (std::size_t t = 0; t < out_len; ++t) {
        const double go = dy[t * g.out_channels + o];
        if (!db.empty()) db[o] += go;
        if (dw.empty()) continue;
        const Index base = static_cast<Index>(t) * stride - pad;
        for (std::size_t c = 0; c < cig; ++c) {
          for (std::size_t kk = 0; kk < g.kernel; ++kk) {
            const Index i = base + static_cast<Index>(kk);
            if (!tap_in_range(i, g.in_len)) continue;
            dw[(o * cig + c) * g.kernel + kk] += go * x[static_cast<std::size_t>(i) * g.in_channels + grp * cig + c];
          }
        }
      }
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  g.validate();
  const auto ot = g.out_time();
  const auto of = g.out_freq();
  const auto kk = g.kernel;
  const auto stride = static_cast<Index>(g.stride);
  const auto pad = static_cast<Index>(g.pad);
#pragma omp parallel for schedule(static)
  for (Index t = 0; t < static_cast<Index>(ot); ++t) {
    for (std::size_t f = 0; f < of; ++f) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t kt = 0; kt < kk; ++kt) {
            const Index ti = t * stride + static_cast<Index>(kt) - pad;
            if (!tap_in_range(ti, g.in_time)) continue;
            for (std::size_t kf = 0; kf < kk; ++kf) {
              const Index fi = static_cast<Index>(f) * stride + static_cast<Index>(kf) - pad;
              if (!tap_in_range(fi, g.in_freq)) continue;
              acc += w[((o * g.in_channels + c) * kk + kt) * kk + kf] *
                     x[(static_cast<std::size_t>(ti) * g.in_freq + static_cast<std::size_t>(fi)) * g.in_channels + c];
            }
          }
        }
        y[(static_cast<std::size_t>(t) * of + f) * g.out_channels + o] = acc;
      }
    }
  }
}

void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db) {
  g.validate();
  const auto ot = g.out_time();
  const auto of = g.out_freq();
  const auto kk = g.kernel;
  const auto stride = static_cast<Index>(g.stride);
  const auto pad = static_cast<Index>(g.pad);

  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (Index ti = 0; ti < static_cast<Index>(g.in_time); ++ti) {
      for (std::size_t t = 0; t < ot; ++t) {
        const Index kt = ti + pad - static_cast<Index>(t) * stride;
        if (kt < 0 || kt >= static_cast<Index>(kk)) continue;
        for (std::size_t f = 0; f < of; ++f) {
          for (std::size_t kf = 0; kf < kk; ++kf) {
            const Index fi = static_cast<Index>(f) * stride + static_cast<Index>(kf) - pad;
            if (!tap_in_range(fi, g.in_freq)) continue;
            double* dxrow = dx.data() + (static_cast<std::size_t>(ti) * g.in_freq + static_cast<std::size_t>(fi)) * g.in_channels;
            for (std::size_t o = 0; o < g.out_channels; ++o) {
              const double go = dy[(t * of + f) * g.out_channels + o];
              for (std::size_t c = 0; c < g.in_channels; ++c) {
                dxrow[c] += go * w[((o * g.in_channels + c) * kk + static_cast<std::size_t>(kt)) * kk + kf];
              }
            }
          }
        }
      }
    }
  }
  if (!dw.empty() || !db.empty()) {
#pragma omp parallel for schedule(static)
    for (Index oi = 0; oi < static_cast<Index>(g.out_channels); ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      for (std::size_t t = 0; t < ot; ++t) {
        for (std::size_t f = 0; f < of; ++f) {
          const double go = dy[(t * of + f) * g.out_channels + o];
          if (!db.empty()) db[o] += go;
          if (dw.empty()) continue;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t kt = 0; kt < kk; ++kt) {
              const Index ti = static_cast<Index>(t) * stride + static_cast<Index>(kt) - pad;
              if (!tap_in_range(ti, g.in_time)) continue;
              for (std::size_t kf = 0; kf < kk; ++kf) {
                const Index fi = static_cast<Index>(f) * stride + static_cast<Index>(kf) - pad;
                if (!tap_in_range(fi, g.in_freq)) continue;
                dw[((o * g.in_channels + c) * kk + kt) * kk + kf] +=
                    go * x[(static_cast<std::size_t>(ti) * g.in_freq + static_cast<std::size_t>(fi)) * g.in_channels + c];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace w2vj::kernels
