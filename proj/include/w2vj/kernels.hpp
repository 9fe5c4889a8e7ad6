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

#pragma once

#include <cstddef>
#include <span>

// Dense inner loops behind the differentiable ops. The default namespace holds
// the OpenMP versions the graph uses; `reference` holds naive serial loops that
// the tests and benchmarks compare against. Every parallel kernel partitions
// outputs statically and keeps a fixed per-element reduction order, so results
// do not depend on the thread count.
namespace w2vj::kernels {

// Row-major GEMMs. `accumulate` adds into C instead of overwriting it.
// C[M,N] = A[M,K] * B[K,N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);
// C[M,N] = A[M,K] * B[N,K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);
// C[M,N] = A[K,M]^T * B[K,N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);

/// Time-major grouped 1-D convolution: x[L, Cin], w[Cout, Cin/groups, K], y[Lout, Cout].
struct Conv1dGeometry {
  std::size_t in_len = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t groups = 1;

  std::size_t out_len() const;
  void validate() const;
};

void conv1d_forward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
// Accumulates into dx, dw, db (any may be empty to skip).
void conv1d_backward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db);

/// Channel-last 2-D convolution: x[T, F, Cin], w[Cout, Cin, K, K], y[T', F', Cout].
struct Conv2dGeometry {
  std::size_t in_time = 0;
  std::size_t in_freq = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  std::size_t out_time() const;
  std::size_t out_freq() const;
  void validate() const;
};

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db);

namespace reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate = false);
void conv1d_forward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv1d_backward(const Conv1dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db);
void conv2d_forward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward(const Conv2dGeometry& g, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> db);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace w2vj::kernels
