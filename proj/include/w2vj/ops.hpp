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

#include <cstdint>
#include <vector>

#include "w2vj/kernels.hpp"
#include "w2vj/tensor.hpp"

// Differentiable primitives. Matrices are row-major [rows, cols]; "row-wise"
// ops treat any tensor as [numel / last_dim, last_dim].
namespace w2vj::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
/// Identity forward; backward multiplies the incoming gradient by s.
Tensor scale_grad(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
/// x[..., D] + bias[D] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
/// x[..., D] * gain[D] broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& gain);
/// Elementwise product with a constant (non-differentiable) mask of the same size.
Tensor mul_const(const Tensor& x, const std::vector<double>& mask);

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[M,K] * weight[N,K]^T + bias[N]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means of x[R, C] -> [C].
Tensor mean_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Row softmax over the first `valid_cols` columns; the rest get weight 0.
Tensor softmax_rows(const Tensor& x, std::size_t valid_cols);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
/// x[R, 2D] -> x[:, :D] * sigmoid(x[:, D:]).
Tensor glu(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-8);

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// out[r, :] = x[index[r], :]
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& index);
/// out[r, j] = x[r, index[r][j]]
Tensor gather_cols(const Tensor& x, const std::vector<std::vector<std::size_t>>& index);
/// Rows flagged in `mask` are replaced by `row`[D]; gradient flows to x elsewhere and to row.
Tensor replace_rows(const Tensor& x, const std::vector<bool>& mask, const Tensor& row);
/// Zero every row at index >= valid.
Tensor mask_rows(const Tensor& x, std::size_t valid);
/// x[T, 2T-1] indexed by relative offset -> out[i, j] = x[i, (pos[i] - pos[j]) + T - 1].
Tensor relative_shift(const Tensor& x, const std::vector<std::int64_t>& positions);

/// Forward: per-row one-hot at the argmax (ties to the lower index); backward: identity.
Tensor straight_through_onehot(const Tensor& soft);

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right, std::size_t groups);
/// x[T, F, Cin] -> [T', F', Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t pad);

}  // namespace w2vj::ops
