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

namespace w2vj::kernels::reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void conv1d_forward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  g.validate();
  const auto out_len = g.out_len();
  const auto cig = g.in_channels / g.groups;
  const auto cog = g.out_channels / g.groups;
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const auto grp = o / cog;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t c = 0; c < cig; ++c) {
        for (std::size_t kk = 0; kk < g.kernel; ++kk) {
          const auto i = static_cast<std::int64_t>(t * g.stride + kk) - static_cast<std::int64_t>(g.pad_left);
          if (i < 0 || i >= static_cast<std::int64_t>(g.in_len)) continue;
          acc += w[(o * cig + c) * g.kernel + kk] * x[static_cast<std::size_t>(i) * g.in_channels + grp * cig + c];
        }
      }
      y[t * g.out_channels + o] = acc;
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
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const auto grp = o / cog;
      const double go = dy[t * g.out_channels + o];
      if (!db.empty()) db[o] += go;
      for (std::size_t c = 0; c < cig; ++c) {
        for (std::size_t kk = 0; kk < g.kernel; ++kk) {
          const auto i = static_cast<std::int64_t>(t * g.stride + kk) - static_cast<std::int64_t>(g.pad_left);
          if (i < 0 || i >= static_cast<std::int64_t>(g.in_len)) continue;
          const auto xi = static_cast<std::size_t>(i) * g.in_channels + grp * cig + c;
          const auto wi = (o * cig + c) * g.kernel + kk;
          if (!dx.empty()) dx[xi] += go * w[wi];
          if (!dw.empty()) dw[wi] += go * x[xi];
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
  for (std::size_t t = 0; t < ot; ++t) {
    for (std::size_t f = 0; f < of; ++f) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t kt = 0; kt < kk; ++kt) {
            const auto ti = static_cast<std::int64_t>(t * g.stride + kt) - static_cast<std::int64_t>(g.pad);
            if (ti < 0 || ti >= static_cast<std::int64_t>(g.in_time)) continue;
            for (std::size_t kf = 0; kf < kk; ++kf) {
              const auto fi = static_cast<std::int64_t>(f * g.stride + kf) - static_cast<std::int64_t>(g.pad);
              if (fi < 0 || fi >= static_cast<std::int64_t>(g.in_freq)) continue;
              acc += w[((o * g.in_channels + c) * kk + kt) * kk + kf] *
                     x[(static_cast<std::size_t>(ti) * g.in_freq + static_cast<std::size_t>(fi)) * g.in_channels + c];
            }
          }
        }
        y[(t * of + f) * g.out_channels + o] = acc;
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
  for (std::size_t t = 0; t < ot; ++t) {
    for (std::size_t f = 0; f < of; ++f) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double go = dy[(t * of + f) * g.out_channels + o];
        if (!db.empty()) db[o] += go;
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t kt = 0; kt < kk; ++kt) {
            const auto ti = static_cast<std::int64_t>(t * g.stride + kt) - static_cast<std::int64_t>(g.pad);
            if (ti < 0 || ti >= static_cast<std::int64_t>(g.in_time)) continue;
            for (std::size_t kf = 0; kf < kk; ++kf) {
              const auto fi = static_cast<std::int64_t>(f * g.stride + kf) - static_cast<std::int64_t>(g.pad);
              if (fi < 0 || fi >= static_cast<std::int64_t>(g.in_freq)) continue;
              const auto xi = (static_cast<std::size_t>(ti) * g.in_freq + static_cast<std::size_t>(fi)) * g.in_channels + c;
              const auto wi = ((o * g.in_channels + c) * kk + kt) * kk + kf;
              if (!dx.empty()) dx[xi] += go * w[wi];
              if (!dw.empty()) dw[wi] += go * x[xi];
            }
          }
        }
      }
    }
  }
}

}  // namespace w2vj::kernels::reference
